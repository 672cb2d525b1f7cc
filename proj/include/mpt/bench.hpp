#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mpt/checkpoint.hpp"
#include "mpt/costmap.hpp"
#include "mpt/errors.hpp"
#include "mpt/model.hpp"
#include "mpt/rrt_star.hpp"
#include "mpt/sst.hpp"
#include "mpt/trainer.hpp"
#include "mpt/worldgen.hpp"

namespace mpt {

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

struct env_spec {
    enum kind_t { forest, maze } kind = forest;
    int width_px = 240, height_px = 240;
    int n_obstacles = 20; // forest
    double resolution = 0.05;
};

inline void to_json(nlohmann::json& j, const env_spec& e) {
    j = {{"kind", e.kind == env_spec::forest ? "forest" : "maze"},
         {"width_px", e.width_px},
         {"height_px", e.height_px},
         {"n_obstacles", e.n_obstacles},
         {"resolution", e.resolution}};
}

inline void from_json(const nlohmann::json& j, env_spec& e) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "forest") e.kind = env_spec::forest;
    else if (kind == "maze") e.kind = env_spec::maze;
    else throw config_error("unknown environment kind '" + kind + "'");
    j.at("width_px").get_to(e.width_px);
    j.at("height_px").get_to(e.height_px);
    j.at("n_obstacles").get_to(e.n_obstacles);
    j.at("resolution").get_to(e.resolution);
}

inline costmap generate_env(const env_spec& spec, uint64_t seed) {
    if (spec.kind == env_spec::forest)
        return gen_forest(spec.width_px, spec.height_px, spec.n_obstacles, seed, {}, spec.resolution);
    const maze_spec ms = maze_spec_for_size(spec.width_px, spec.height_px);
    return gen_maze_detailed(ms.rows, ms.cols, ms.cell_size_px, ms.wall_px, seed, spec.width_px,
                             spec.height_px, spec.resolution)
        .map;
}

// One oracle-solved planning problem: the stored first-solution cost is the
// benchmark cost threshold for that problem.
struct dataset_record {
    int env_id = 0;     // external environment id (directory name)
    int map_index = 0;  // dense index into dataset::maps
    int problem_id = 0;
    point2 start, goal;
    std::vector<se2_state> path;
    std::vector<control_segment> controls; // dubins only
    double cost = 0.0;
    std::string robot = "point";
    uint64_t oracle_seed = 0;
};

struct dataset {
    env_spec spec;
    robot_model robot;
    uint64_t seed = 0;
    std::vector<costmap> maps; // indexed by env_id
    std::vector<dataset_record> records;
};

struct collect_config {
    env_spec env;
    int n_envs = 50;
    int paths_per_env = 5;
    robot_model robot;
    uint64_t seed = 0;
    double oracle_time_limit_s = 20.0;
    double min_separation_frac = 0.2;
    int max_retries = 5; // start/goal resamples per requested path
    int threads = 1;
    bool dry_run = false;
};

namespace detail {

inline nlohmann::json record_to_json(const dataset_record& r) {
    nlohmann::json path = nlohmann::json::array();
    for (const auto& s : r.path) {
        if (r.robot == "dubins") path.push_back({s.x, s.y, s.theta});
        else path.push_back({s.x, s.y});
    }
    nlohmann::json j = {{"problem_id", r.problem_id},
                        {"start", {r.start.x, r.start.y}},
                        {"goal", {r.goal.x, r.goal.y}},
                        {"path", path},
                        {"cost", r.cost},
                        {"robot", r.robot},
                        {"oracle_seed", r.oracle_seed}};
    if (!r.controls.empty()) {
        nlohmann::json ctrls = nlohmann::json::array();
        for (const auto& c : r.controls) ctrls.push_back({c.v, c.steer, c.steps});
        j["controls"] = ctrls;
    }
    return j;
}

inline dataset_record record_from_json(const nlohmann::json& j, int env_id) {
    dataset_record r;
    r.env_id = env_id;
    j.at("problem_id").get_to(r.problem_id);
    r.start = {j.at("start")[0].get<double>(), j.at("start")[1].get<double>()};
    r.goal = {j.at("goal")[0].get<double>(), j.at("goal")[1].get<double>()};
    for (const auto& s : j.at("path")) {
        se2_state st{s[0].get<double>(), s[1].get<double>(), 0.0};
        if (s.size() > 2) st.theta = s[2].get<double>();
        r.path.push_back(st);
    }
    j.at("cost").get_to(r.cost);
    j.at("robot").get_to(r.robot);
    j.at("oracle_seed").get_to(r.oracle_seed);
    if (j.contains("controls"))
        for (const auto& c : j.at("controls"))
            r.controls.push_back({c[0].get<double>(), c[1].get<double>(), c[2].get<int>()});
    return r;
}

inline std::string env_dir_name(int env_id) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "env_%05d", env_id);
    return buf;
}

} // namespace detail

// Runs the oracle planner to its first solution; the unlimited threshold
// makes the run stop as soon as any solution exists.
inline plan_result run_oracle(const costmap& map, const robot_model& robot, const point2& start,
                              const point2& goal, double time_limit_s, uint64_t seed) {
    termination_spec term;
    term.time_limit_s = time_limit_s;
    term.cost_threshold_m = std::numeric_limits<double>::infinity();
    if (robot.kind == robot_model::point)
        return rrt_star(map, start, goal, sampler_region::full_map(), term, seed);
    return sst(map, robot, start, goal, sampler_region::full_map(), term, seed);
}

// Collects maps and oracle-solved problems into out_dir. Unsolvable draws
// are resampled up to max_retries times and logged; an environment with no
// solved problem at all is skipped (also logged). Dry runs only register
// the planned record count. Environments are independent and may be
// collected in parallel; outputs are assembled in env order either way.
// When external maps are given they are used as-is instead of generating.
inline dataset collect_dataset(const collect_config& cfg, const std::string& out_dir,
                               std::ostream* log = nullptr,
                               const std::vector<costmap>* external_maps = nullptr) {
    namespace fs = std::filesystem;
    dataset ds;
    ds.spec = cfg.env;
    ds.robot = cfg.robot;
    ds.seed = cfg.seed;
    fs::create_directories(out_dir);
    const int n_envs = external_maps ? static_cast<int>(external_maps->size()) : cfg.n_envs;

    nlohmann::json manifest = {{"env", cfg.env},
                               {"n_envs", n_envs},
                               {"paths_per_env", cfg.paths_per_env},
                               {"robot", cfg.robot.kind == robot_model::point ? "point" : "dubins"},
                               {"seed", cfg.seed},
                               {"dry_run", cfg.dry_run},
                               {"planned_records", n_envs * cfg.paths_per_env}};
    if (cfg.dry_run) {
        nlohmann::json envs = nlohmann::json::array();
        for (int e = 0; e < n_envs; ++e)
            envs.push_back({{"env_id", e},
                            {"seed", derive_seed(cfg.seed, "env", e)},
                            {"planned_paths", cfg.paths_per_env}});
        manifest["envs"] = envs;
        std::ofstream(out_dir + "/dataset.json") << manifest.dump(2) << "\n";
        return ds;
    }

    struct env_result {
        costmap map;
        std::vector<dataset_record> records;
        std::vector<std::string> log_lines;
        uint64_t env_seed = 0;
    };
    std::vector<env_result> results(n_envs);

    auto collect_env = [&](int e) {
        auto& out = results[e];
        out.env_seed = derive_seed(cfg.seed, "env", e);
        out.map = external_maps ? (*external_maps)[e] : generate_env(cfg.env, out.env_seed);
        rng sample_rng(derive_seed(cfg.seed, "problems", e));
        for (int p = 0; p < cfg.paths_per_env; ++p) {
            for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
                point2 start, goal;
                try {
                    std::tie(start, goal) = sample_problem(out.map, sample_rng, cfg.min_separation_frac);
                } catch (const sampling_error&) {
                    break;
                }
                const uint64_t oracle_seed =
                    derive_seed(cfg.seed, "oracle", (static_cast<uint64_t>(e) << 20) + p * 16 + attempt);
                const plan_result oracle =
                    run_oracle(out.map, cfg.robot, start, goal, cfg.oracle_time_limit_s, oracle_seed);
                if (!oracle.success) {
                    std::ostringstream os;
                    os << "env " << e << " path " << p << " attempt " << attempt
                       << ": oracle failed, resampling";
                    out.log_lines.push_back(os.str());
                    continue;
                }
                dataset_record rec;
                rec.env_id = e;
                rec.problem_id = p;
                rec.start = start;
                rec.goal = goal;
                rec.path = oracle.path;
                rec.controls = oracle.controls;
                rec.cost = oracle.cost;
                rec.robot = cfg.robot.kind == robot_model::point ? "point" : "dubins";
                rec.oracle_seed = oracle_seed;
                out.records.push_back(std::move(rec));
                break;
            }
        }
    };

    if (cfg.threads > 1) {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < cfg.threads; ++w)
            pool.emplace_back([&]() {
                for (int e = next.fetch_add(1); e < n_envs; e = next.fetch_add(1)) collect_env(e);
            });
        for (auto& w : pool) w.join();
    } else {
        for (int e = 0; e < n_envs; ++e) collect_env(e);
    }

    nlohmann::json envs = nlohmann::json::array();
    for (int e = 0; e < n_envs; ++e) {
        auto& out = results[e];
        if (log)
            for (const auto& line : out.log_lines) *log << line << "\n";
        if (out.records.empty()) {
            if (log) *log << "env " << e << ": no solvable problem, skipping environment\n";
            continue;
        }
        const std::string dir = out_dir + "/" + detail::env_dir_name(e);
        fs::create_directories(dir);
        save_pgm(out.map, dir + "/map.pgm");
        nlohmann::json env_meta = {{"kind", cfg.env.kind == env_spec::forest ? "forest" : "maze"},
                                   {"seed", out.env_seed},
                                   {"spec", cfg.env},
                                   {"resolution", out.map.resolution}};
        std::ofstream(dir + "/env.json") << env_meta.dump(2) << "\n";
        nlohmann::json problems = nlohmann::json::array();
        for (const auto& r : out.records) problems.push_back(detail::record_to_json(r));
        std::ofstream(dir + "/problems.json") << problems.dump(2) << "\n";
        envs.push_back({{"env_id", e},
                        {"dir", detail::env_dir_name(e)},
                        {"seed", out.env_seed},
                        {"n_problems", out.records.size()}});
        const int map_index = static_cast<int>(ds.maps.size());
        ds.maps.push_back(std::move(out.map));
        for (auto& r : out.records) {
            r.map_index = map_index;
            ds.records.push_back(std::move(r));
        }
    }
    manifest["envs"] = envs;
    std::ofstream(out_dir + "/dataset.json") << manifest.dump(2) << "\n";
    return ds;
}

inline dataset load_dataset(const std::string& dir) {
    std::ifstream in(dir + "/dataset.json");
    if (!in) throw io_error("cannot open '" + dir + "/dataset.json'");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw io_error("corrupt dataset manifest: " + std::string(e.what()));
    }
    if (manifest.value("dry_run", false)) throw config_error("dataset is a dry-run plan, not collected data");
    dataset ds;
    manifest.at("env").get_to(ds.spec);
    ds.seed = manifest.at("seed").get<uint64_t>();
    ds.robot.kind = manifest.at("robot").get<std::string>() == "dubins" ? robot_model::dubins
                                                                        : robot_model::point;
    for (const auto& env : manifest.at("envs")) {
        const int env_id = env.at("env_id").get<int>();
        const std::string edir = dir + "/" + env.at("dir").get<std::string>();
        ds.maps.push_back(load_pgm(edir + "/map.pgm"));
        std::ifstream pin(edir + "/problems.json");
        if (!pin) throw io_error("cannot open '" + edir + "/problems.json'");
        nlohmann::json problems = nlohmann::json::parse(pin);
        for (const auto& pj : problems) {
            auto rec = detail::record_from_json(pj, env_id);
            rec.map_index = static_cast<int>(ds.maps.size()) - 1;
            ds.records.push_back(std::move(rec));
        }
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Oracle mask
// ---------------------------------------------------------------------------

// The mask a perfect region proposal would emit for a known path: all
// anchors within the labeling radius of the path, plus the endpoint patches.
inline mask_grid oracle_mask(const dataset_record& rec, const costmap& map, const model_config& cfg,
                             double radius_m = 0.7) {
    const anchor_grid grid = anchor_grid_for(cfg, map.height, map.width);
    const anchor_labels labels = label_anchors(rec.path, grid, map.resolution, radius_m);
    return build_mask_from_anchors(labels.positive, grid, rec.start, rec.goal, cfg.patch_px,
                                   map.resolution);
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct eval_row {
    int env_id = 0;
    int problem_id = 0;
    std::string planner;
    bool success = false;
    double time_s = 0.0;
    double inference_time_s = 0.0;
    int64_t vertices = 0;
    double cost = 0.0;
    double threshold = 0.0;
    uint64_t seed = 0;

    std::string key() const {
        return std::to_string(env_id) + "/" + std::to_string(problem_id) + "/" + planner + "/" +
               std::to_string(seed);
    }
};

inline std::string eval_csv_header() {
    return "env_id,problem_id,planner,success,time_s,inference_time_s,vertices,cost,threshold,seed";
}

inline std::string eval_row_csv(const eval_row& r) {
    std::ostringstream os;
    os.precision(9);
    os << r.env_id << ',' << r.problem_id << ',' << r.planner << ',' << (r.success ? 1 : 0) << ','
       << r.time_s << ',' << r.inference_time_s << ',' << r.vertices << ',' << r.cost << ','
       << r.threshold << ',' << r.seed;
    return os.str();
}

inline eval_row eval_row_from_csv(const std::string& line) {
    std::vector<std::string> f;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            f.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    f.push_back(cur);
    if (f.size() != 10) throw io_error("bad CSV row: '" + line + "'");
    eval_row r;
    r.env_id = std::stoi(f[0]);
    r.problem_id = std::stoi(f[1]);
    r.planner = f[2];
    r.success = f[3] == "1";
    r.time_s = std::stod(f[4]);
    r.inference_time_s = std::stod(f[5]);
    r.vertices = std::stoll(f[6]);
    r.cost = std::stod(f[7]);
    r.threshold = std::stod(f[8]);
    r.seed = std::stoull(f[9]);
    return r;
}

// Nearest-rank quantile: the ceil(p*n)-th smallest value.
inline double nearest_rank_quantile(std::vector<double> values, double p) {
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(values.begin(), values.end());
    const int64_t n = static_cast<int64_t>(values.size());
    int64_t rank = static_cast<int64_t>(std::ceil(p * static_cast<double>(n)));
    rank = std::clamp<int64_t>(rank, 1, n);
    return values[rank - 1];
}

struct quantile_set {
    double p5 = 0, p25 = 0, p50 = 0, p75 = 0, p95 = 0;
};

inline quantile_set quantiles_of(const std::vector<double>& values) {
    return {nearest_rank_quantile(values, 0.05), nearest_rank_quantile(values, 0.25),
            nearest_rank_quantile(values, 0.50), nearest_rank_quantile(values, 0.75),
            nearest_rank_quantile(values, 0.95)};
}

inline void to_json(nlohmann::json& j, const quantile_set& q) {
    j = {{"p5", q.p5}, {"p25", q.p25}, {"p50", q.p50}, {"p75", q.p75}, {"p95", q.p95}};
}

struct planner_summary {
    std::string planner;
    int64_t problems = 0;
    int64_t successes = 0;
    double accuracy = 0.0;
    quantile_set time_q, vertex_q; // over successes only
};

// Accuracy counts every attempted problem; the distribution statistics
// consider only successes that beat the threshold within the time limit.
inline std::vector<planner_summary> summarize(const std::vector<eval_row>& rows) {
    std::map<std::string, std::vector<const eval_row*>> by_planner;
    for (const auto& r : rows) by_planner[r.planner].push_back(&r);
    std::vector<planner_summary> out;
    for (auto& [name, rs] : by_planner) {
        planner_summary s;
        s.planner = name;
        s.problems = static_cast<int64_t>(rs.size());
        std::vector<double> times, verts;
        for (const auto* r : rs) {
            if (!r->success) continue;
            ++s.successes;
            times.push_back(r->time_s);
            verts.push_back(static_cast<double>(r->vertices));
        }
        s.accuracy = s.problems > 0 ? static_cast<double>(s.successes) / s.problems : 0.0;
        s.time_q = quantiles_of(times);
        s.vertex_q = quantiles_of(verts);
        out.push_back(std::move(s));
    }
    return out;
}

inline nlohmann::json summary_to_json(const std::vector<planner_summary>& summary) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& s : summary) {
        j[s.planner] = {{"problems", s.problems},
                        {"successes", s.successes},
                        {"accuracy", s.accuracy},
                        {"time_s", s.time_q},
                        {"vertices", s.vertex_q}};
    }
    return j;
}

struct eval_config {
    std::vector<std::string> planners; // rrtstar|irrtstar|sst with mpt-/oracle- prefixes
    double time_limit_s = 10.0;
    double threshold_multiplier = 1.0;
    double tau = 0.5;
    double oracle_radius_m = 0.7;
    uint64_t seed = 0;
    int threads = 1;
    const mpt_model* model = nullptr;
    rrt_params rrt;
    sst_params sstp;
};

namespace detail {

struct planner_kind {
    enum base_t { rrtstar, irrtstar, sstp } base = rrtstar;
    enum aid_t { unaided, mpt_mask, oracle } aid = unaided;
};

inline planner_kind parse_planner(const std::string& name) {
    planner_kind k;
    std::string base = name;
    if (name.rfind("mpt-", 0) == 0) {
        k.aid = planner_kind::mpt_mask;
        base = name.substr(4);
    } else if (name.rfind("oracle-", 0) == 0) {
        k.aid = planner_kind::oracle;
        base = name.substr(7);
    }
    if (base == "rrtstar") k.base = planner_kind::rrtstar;
    else if (base == "irrtstar") k.base = planner_kind::irrtstar;
    else if (base == "sst") k.base = planner_kind::sstp;
    else throw config_error("unknown planner '" + name + "'");
    return k;
}

} // namespace detail

struct eval_output {
    std::vector<eval_row> rows;
    std::vector<planner_summary> summary;
};

// Benchmarks every (record, planner) pair. Aided planners plan inside the
// inferred or oracle mask; an empty/degenerate proposal is recorded as a
// failure, exactly like a timeout. Reruns skip keys already present in
// results.csv, and output files are rewritten sorted so identical runs
// produce identical bytes.
inline eval_output evaluate(const dataset& ds, const eval_config& cfg, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const std::string csv_path = out_dir + "/results.csv";

    std::vector<eval_row> existing;
    std::set<std::string> have;
    if (fs::exists(csv_path)) {
        std::ifstream in(csv_path);
        std::string line;
        std::getline(in, line); // header
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            existing.push_back(eval_row_from_csv(line));
            have.insert(existing.back().key());
        }
    }

    for (const auto& name : cfg.planners) {
        const auto kind = detail::parse_planner(name);
        if (kind.aid == detail::planner_kind::mpt_mask && !cfg.model)
            throw config_error("planner '" + name + "' requires a model");
        if ((kind.base == detail::planner_kind::sstp) != (ds.robot.kind == robot_model::dubins))
            throw config_error("planner '" + name + "' does not match the dataset robot model");
    }

    // Precompute model masks once per problem (shared by the aided variants).
    const bool need_model_masks = std::any_of(cfg.planners.begin(), cfg.planners.end(), [](const auto& n) {
        return detail::parse_planner(n).aid == detail::planner_kind::mpt_mask;
    });
    std::vector<std::optional<inference_result>> model_masks(ds.records.size());
    if (need_model_masks) {
        for (size_t i = 0; i < ds.records.size(); ++i) {
            const auto& rec = ds.records[i];
            model_masks[i] = infer_mask(*cfg.model, ds.maps[rec.map_index], rec.start, rec.goal, cfg.tau);
        }
    }

    struct task {
        size_t record_idx;
        std::string planner;
    };
    std::vector<task> tasks;
    for (size_t i = 0; i < ds.records.size(); ++i)
        for (const auto& name : cfg.planners) {
            eval_row probe;
            probe.env_id = ds.records[i].env_id;
            probe.problem_id = ds.records[i].problem_id;
            probe.planner = name;
            probe.seed = derive_seed(cfg.seed, "plan-" + name,
                                     (static_cast<uint64_t>(ds.records[i].env_id) << 20) +
                                         static_cast<uint64_t>(ds.records[i].problem_id));
            if (have.count(probe.key())) continue;
            tasks.push_back({i, name});
        }

    std::vector<eval_row> fresh(tasks.size());
    std::atomic<size_t> next{0};
    auto worker = [&]() {
        for (size_t t = next.fetch_add(1); t < tasks.size(); t = next.fetch_add(1)) {
            const auto& rec = ds.records[tasks[t].record_idx];
            const auto& map = ds.maps[rec.map_index];
            const auto kind = detail::parse_planner(tasks[t].planner);
            eval_row row;
            row.env_id = rec.env_id;
            row.problem_id = rec.problem_id;
            row.planner = tasks[t].planner;
            row.threshold = rec.cost;
            row.seed = derive_seed(cfg.seed, "plan-" + tasks[t].planner,
                                   (static_cast<uint64_t>(rec.env_id) << 20) +
                                       static_cast<uint64_t>(rec.problem_id));

            termination_spec term;
            term.time_limit_s = cfg.time_limit_s;
            term.cost_threshold_m = rec.cost;
            term.threshold_multiplier = cfg.threshold_multiplier;

            mask_grid local_mask;
            sampler_region region = sampler_region::full_map();
            if (kind.aid == detail::planner_kind::mpt_mask) {
                const auto& inf = *model_masks[tasks[t].record_idx];
                local_mask = inf.mask;
                row.inference_time_s = inf.inference_time_s;
                region = sampler_region::with_mask(local_mask);
            } else if (kind.aid == detail::planner_kind::oracle) {
                const model_config mc = cfg.model ? cfg.model->config() : model_config::defaults();
                local_mask = oracle_mask(rec, map, mc, cfg.oracle_radius_m);
                region = sampler_region::with_mask(local_mask);
            }

            plan_result pr;
            if (kind.base == detail::planner_kind::rrtstar)
                pr = rrt_star(map, rec.start, rec.goal, region, term, row.seed, cfg.rrt);
            else if (kind.base == detail::planner_kind::irrtstar)
                pr = informed_rrt_star(map, rec.start, rec.goal, region, term, row.seed, cfg.rrt);
            else
                pr = sst(map, ds.robot, rec.start, rec.goal, region, term, row.seed, cfg.sstp);

            row.success = pr.success;
            row.time_s = pr.time_s;
            row.vertices = pr.vertices;
            row.cost = pr.success ? pr.cost : 0.0;
            fresh[t] = row;
        }
    };
    if (cfg.threads > 1) {
        std::vector<std::thread> pool;
        for (int w = 0; w < cfg.threads; ++w) pool.emplace_back(worker);
        for (auto& w : pool) w.join();
    } else {
        worker();
    }

    eval_output out;
    out.rows = std::move(existing);
    out.rows.insert(out.rows.end(), fresh.begin(), fresh.end());
    std::sort(out.rows.begin(), out.rows.end(), [](const eval_row& a, const eval_row& b) {
        return std::tie(a.env_id, a.problem_id, a.planner, a.seed) <
               std::tie(b.env_id, b.problem_id, b.planner, b.seed);
    });
    std::ofstream csv(csv_path);
    csv << eval_csv_header() << "\n";
    for (const auto& r : out.rows) csv << eval_row_csv(r) << "\n";

    out.summary = summarize(out.rows);
    nlohmann::json sj = summary_to_json(out.summary);
    sj["time_limit_s"] = cfg.time_limit_s;
    sj["threshold_multiplier"] = cfg.threshold_multiplier;
    std::ofstream(out_dir + "/summary.json") << sj.dump(2) << "\n";
    return out;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

// Map as black obstacles on white, optional probability heat (pixel-level,
// e.g. the probability PGM), green mask tint, red path polyline.
// Byte-deterministic for identical inputs.
inline rgb_image render(const costmap& map, const mask_grid* mask = nullptr,
                        const std::vector<se2_state>* path = nullptr,
                        const gray_image* probs = nullptr) {
    rgb_image img(map.width, map.height);
    for (int r = 0; r < map.height; ++r)
        for (int c = 0; c < map.width; ++c)
            if (map.at(r, c)) img.set(r, c, 0, 0, 0);
    if (probs) {
        for (int r = 0; r < std::min(map.height, probs->height); ++r)
            for (int c = 0; c < std::min(map.width, probs->width); ++c) {
                const int v = probs->pixels[static_cast<size_t>(r) * probs->width + c];
                uint8_t r0, g0, b0;
                img.get(r, c, r0, g0, b0);
                img.set(r, c, static_cast<uint8_t>((r0 + v) / 2), static_cast<uint8_t>(g0 / 2),
                        static_cast<uint8_t>((b0 + 255 - v) / 2));
            }
    }
    if (mask) {
        for (int r = 0; r < map.height; ++r)
            for (int c = 0; c < map.width; ++c)
                if (mask->test(r, c)) {
                    if (map.at(r, c)) img.set(r, c, 0, 80, 0);
                    else img.set(r, c, 200, 255, 200);
                }
    }
    if (path && path->size() >= 1) {
        auto plot = [&](const point2& p) {
            img.set(map.row_of(p.y), map.col_of(p.x), 255, 0, 0);
        };
        for (size_t i = 0; i + 1 < path->size(); ++i) {
            const point2 a = (*path)[i].pos(), b = (*path)[i + 1].pos();
            const double d = dist2d(a, b);
            const int steps = std::max(1, static_cast<int>(std::ceil(d / (0.25 * map.resolution))));
            for (int s = 0; s <= steps; ++s) {
                const double t = static_cast<double>(s) / steps;
                plot({a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)});
            }
        }
        plot(path->back().pos());
    }
    return img;
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

struct bench_preset {
    std::string name;
    env_spec env;
    int n_envs = 50;
    int paths_per_env = 5;
    robot_model robot;
    double time_limit_s = 10.0;
    double threshold_multiplier = 1.0;
    double oracle_time_limit_s = 20.0;
    bool paper_scale = false; // declared for reference; collected via dry-run by default
};

inline std::vector<bench_preset> bench_presets() {
    std::vector<bench_preset> ps;
    robot_model point;
    robot_model dubins;
    dubins.kind = robot_model::dubins;
    ps.push_back({"forest-240", {env_spec::forest, 240, 240, 20, 0.05}, 50, 5, point, 10.0, 1.0, 20.0, false});
    ps.push_back({"maze-240", {env_spec::maze, 240, 240, 0, 0.05}, 50, 5, point, 10.0, 1.0, 20.0, false});
    ps.push_back({"dubins-forest-240", {env_spec::forest, 240, 240, 20, 0.05}, 20, 1, dubins, 60.0, 1.3,
                  60.0, false});
    ps.push_back({"paper-forest-480", {env_spec::forest, 480, 480, 100, 0.05}, 1750, 25, point, 10.0, 1.0,
                  60.0, true});
    ps.push_back({"paper-maze-480", {env_spec::maze, 480, 480, 0, 0.05}, 1750, 25, point, 10.0, 1.0, 60.0,
                  true});
    ps.push_back({"paper-dubins-forest-480", {env_spec::forest, 480, 480, 100, 0.05}, 1000, 50, dubins,
                  60.0, 1.3, 120.0, true});
    return ps;
}

inline const bench_preset& find_preset(const std::string& name) {
    static const std::vector<bench_preset> ps = bench_presets();
    for (const auto& p : ps)
        if (p.name == name) return p;
    throw config_error("unknown preset '" + name + "'");
}

} // namespace mpt
