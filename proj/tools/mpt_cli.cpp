// Command-line entry point for the region-proposal planning pipeline:
// world generation, dataset collection, training, inference, planning,
// benchmarking, gradient checking, and rendering.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "mpt/bench.hpp"
#include "mpt/checkpoint.hpp"
#include "mpt/gradcheck.hpp"
#include "mpt/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPlanFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

struct common_opts {
    uint64_t seed = 0;
    int threads = 1;
    std::string config_file;
    json config; // parsed config file, defaults merged
};

json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw mpt::io_error("cannot open config file '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw mpt::config_error("malformed config file '" + path + "': " + e.what());
    }
}

void write_run_config(const std::string& out_dir, const std::string& subcommand, const json& resolved) {
    fs::create_directories(out_dir);
    json j = resolved;
    j["subcommand"] = subcommand;
    std::ofstream(out_dir + "/run_config.json") << j.dump(2) << "\n";
}

std::pair<int, int> parse_size(const std::string& s) {
    const auto x = s.find('x');
    if (x == std::string::npos) throw mpt::config_error("size must be WxH, got '" + s + "'");
    try {
        return {std::stoi(s.substr(0, x)), std::stoi(s.substr(x + 1))};
    } catch (const std::exception&) {
        throw mpt::config_error("size must be WxH, got '" + s + "'");
    }
}

mpt::point2 parse_point(const std::string& s) {
    const auto c = s.find(',');
    if (c == std::string::npos) throw mpt::config_error("position must be x,y, got '" + s + "'");
    try {
        return {std::stod(s.substr(0, c)), std::stod(s.substr(c + 1))};
    } catch (const std::exception&) {
        throw mpt::config_error("position must be x,y, got '" + s + "'");
    }
}

mpt::model_config model_config_from(const json& cfg, bool tiny) {
    mpt::model_config mc = tiny ? mpt::model_config::tiny() : mpt::model_config::defaults();
    if (cfg.contains("model")) {
        json merged = json(mc);
        merged.merge_patch(cfg.at("model"));
        mc = merged.get<mpt::model_config>();
    }
    mc.validate();
    return mc;
}

int cmd_envgen(const common_opts& common, const std::string& kind, const std::string& size, int count,
               int obstacles, const std::string& out_dir) {
    const auto [w, h] = parse_size(size);
    write_run_config(out_dir, "envgen",
                     {{"kind", kind},
                      {"size", size},
                      {"count", count},
                      {"obstacles", obstacles},
                      {"seed", common.seed}});
    for (int i = 0; i < count; ++i) {
        const uint64_t map_seed = mpt::derive_seed(common.seed, "env", i);
        mpt::env_spec spec;
        spec.kind = kind == "maze" ? mpt::env_spec::maze : mpt::env_spec::forest;
        spec.width_px = w;
        spec.height_px = h;
        spec.n_obstacles = obstacles;
        mpt::costmap map = mpt::generate_env(spec, map_seed);
        char name[32];
        std::snprintf(name, sizeof(name), "map_%05d", i);
        mpt::save_pgm(map, out_dir + "/" + name + ".pgm");
        json meta = {{"kind", kind},
                     {"seed", map_seed},
                     {"spec", spec},
                     {"resolution", map.resolution},
                     {"provenance", map.provenance}};
        std::ofstream(out_dir + "/" + name + ".json") << meta.dump(2) << "\n";
    }
    std::cout << "wrote " << count << " " << kind << " maps to " << out_dir << "\n";
    return kExitOk;
}

int cmd_collect(const common_opts& common, const std::string& envs_dir, const std::string& preset_name,
                int paths, const std::string& robot, const std::string& out_dir, bool dry_run) {
    mpt::collect_config cfg;
    cfg.seed = common.seed;
    cfg.threads = common.threads;
    cfg.paths_per_env = paths;
    cfg.dry_run = dry_run;
    cfg.robot.kind = robot == "dubins" ? mpt::robot_model::dubins : mpt::robot_model::point;

    std::optional<std::vector<mpt::costmap>> maps;
    if (!preset_name.empty()) {
        const auto& preset = mpt::find_preset(preset_name);
        cfg.env = preset.env;
        cfg.n_envs = preset.n_envs;
        cfg.paths_per_env = preset.paths_per_env;
        cfg.robot = preset.robot;
        cfg.oracle_time_limit_s = preset.oracle_time_limit_s;
        if (preset.paper_scale && !dry_run)
            std::cout << "note: paper-scale preset; use --dry-run to register without running\n";
    } else if (!envs_dir.empty()) {
        maps.emplace();
        std::vector<std::string> files;
        for (const auto& entry : fs::directory_iterator(envs_dir))
            if (entry.path().extension() == ".pgm") files.push_back(entry.path().string());
        std::sort(files.begin(), files.end());
        if (files.empty()) throw mpt::io_error("no .pgm maps in '" + envs_dir + "'");
        for (const auto& f : files) maps->push_back(mpt::load_pgm(f));
    } else {
        throw mpt::config_error("collect requires --envs or --preset");
    }

    write_run_config(out_dir, "collect",
                     {{"envs", envs_dir},
                      {"preset", preset_name},
                      {"paths", cfg.paths_per_env},
                      {"robot", cfg.robot.kind == mpt::robot_model::dubins ? "dubins" : "point"},
                      {"dry_run", dry_run},
                      {"seed", common.seed},
                      {"threads", common.threads}});
    const mpt::dataset ds =
        mpt::collect_dataset(cfg, out_dir, &std::cout, maps ? &*maps : nullptr);
    std::cout << (dry_run ? "registered " : "collected ")
              << (dry_run ? static_cast<size_t>(cfg.paths_per_env) *
                                (maps ? maps->size() : static_cast<size_t>(cfg.n_envs))
                          : ds.records.size())
              << " records in " << out_dir << "\n";
    return kExitOk;
}

int cmd_train(const common_opts& common, const std::string& data_dir, const std::string& out_path,
              int64_t steps, bool tiny) {
    mpt::dataset ds = mpt::load_dataset(data_dir);
    mpt::training_set tset;
    tset.maps = std::move(ds.maps);
    for (const auto& rec : ds.records)
        tset.problems.push_back({rec.map_index, rec.start, rec.goal, rec.path});

    const mpt::model_config mc = model_config_from(common.config, tiny);
    mpt::train_config tc;
    if (common.config.contains("train")) {
        const auto& t = common.config.at("train");
        tc.warmup_steps = t.value("warmup_steps", tc.warmup_steps);
        tc.problems_per_step = t.value("problems_per_step", tc.problems_per_step);
        tc.max_pos = t.value("max_pos", tc.max_pos);
        tc.total_steps = t.value("total_steps", tc.total_steps);
        tc.eval_every = t.value("eval_every", tc.eval_every);
        tc.holdout_frac = t.value("holdout_frac", tc.holdout_frac);
        tc.label_radius_m = t.value("label_radius_m", tc.label_radius_m);
    }
    if (steps > 0) tc.total_steps = steps;
    tc.seed = common.seed;
    tc.threads = common.threads;

    const std::string out_dir = fs::path(out_path).has_parent_path()
                                    ? fs::path(out_path).parent_path().string()
                                    : std::string(".");
    write_run_config(out_dir, "train",
                     {{"data", data_dir},
                      {"out", out_path},
                      {"model", mc},
                      {"train",
                       {{"warmup_steps", tc.warmup_steps},
                        {"problems_per_step", tc.problems_per_step},
                        {"max_pos", tc.max_pos},
                        {"total_steps", tc.total_steps},
                        {"eval_every", tc.eval_every},
                        {"holdout_frac", tc.holdout_frac},
                        {"label_radius_m", tc.label_radius_m}}},
                      {"seed", common.seed},
                      {"threads", common.threads}});

    mpt::mpt_model model(mc, mpt::derive_seed(common.seed, "model-init"));
    std::ofstream log_file(out_dir + "/train_log.jsonl");
    auto log_step = [&](const mpt::step_record& r) {
        log_file << json{{"step", r.step}, {"lr", r.lr}, {"loss", r.loss}, {"wall_ms", r.wall_ms}}.dump()
                 << "\n";
        if (r.step % 100 == 0)
            std::cout << "step " << r.step << " loss " << r.loss << " lr " << r.lr << "\n";
        return false;
    };
    auto log_eval = [&](const mpt::eval_record& r, bool holdout) {
        log_file << json{{"step", r.step},
                         {"precision", r.precision},
                         {"recall", r.recall},
                         {"tau", r.tau},
                         {"split", holdout ? "holdout" : "train"}}
                        .dump()
                 << "\n";
    };
    mpt::train(tset, model, tc, log_step, log_eval);
    mpt::save_checkpoint(out_path, model);
    std::cout << "saved checkpoint to " << out_path << "\n";
    return kExitOk;
}

int cmd_infer(const common_opts&, const std::string& model_path, const std::string& map_path,
              const std::string& start_s, const std::string& goal_s, double tau,
              const std::string& out_dir) {
    const mpt::mpt_model model = mpt::load_checkpoint(model_path);
    const mpt::costmap map = mpt::load_pgm(map_path);
    const mpt::point2 start = parse_point(start_s), goal = parse_point(goal_s);
    write_run_config(out_dir, "infer",
                     {{"model", model_path},
                      {"map", map_path},
                      {"start", {start.x, start.y}},
                      {"goal", {goal.x, goal.y}},
                      {"tau", tau}});
    const auto inf = mpt::infer_mask(model, map, start, goal, tau);
    mpt::write_pgm(out_dir + "/mask.pgm", static_cast<int>(inf.mask.width),
                   static_cast<int>(inf.mask.height), mpt::mask_to_pgm(inf.mask).pixels);
    const auto probs = mpt::probability_pgm(inf.path_probs, inf.grid);
    mpt::write_pgm(out_dir + "/probs.pgm", probs.width, probs.height, probs.pixels);
    std::ofstream(out_dir + "/infer.json")
        << json{{"inference_time_s", inf.inference_time_s},
                {"tau", tau},
                {"selected_anchors", inf.mask.selected_anchors.size()},
                {"mask_pixels", inf.mask.popcount()}}
               .dump(2)
        << "\n";
    std::cout << "mask covers " << inf.mask.popcount() << " pixels ("
              << inf.mask.selected_anchors.size() << " anchors), inference " << inf.inference_time_s
              << " s\n";
    return kExitOk;
}

json plan_result_json(const mpt::plan_result& res, const mpt::robot_model& robot) {
    json states = json::array();
    for (const auto& s : res.path) {
        if (robot.kind == mpt::robot_model::dubins) states.push_back({s.x, s.y, s.theta});
        else states.push_back({s.x, s.y});
    }
    json j = {{"states", states},
              {"cost", res.cost},
              {"vertices", res.vertices},
              {"time_s", res.time_s},
              {"success", res.success}};
    if (!res.controls.empty()) {
        json ctrls = json::array();
        for (const auto& c : res.controls) ctrls.push_back({c.v, c.steer, c.steps * robot.dt_s});
        j["controls"] = ctrls;
    }
    if (!res.success) j["failure_reason"] = res.failure_reason;
    return j;
}

int cmd_plan(const common_opts& common, const std::string& planner, const std::string& map_path,
             const std::string& start_s, const std::string& goal_s, const std::string& mask_path,
             const std::string& model_path, bool oracle_mask_flag, double time_limit,
             double cost_threshold, double multiplier, double tau, const std::string& out_dir) {
    const mpt::costmap map = mpt::load_pgm(map_path);
    const mpt::point2 start = parse_point(start_s), goal = parse_point(goal_s);
    mpt::robot_model robot;
    robot.kind = planner == "sst" ? mpt::robot_model::dubins : mpt::robot_model::point;

    write_run_config(out_dir, "plan",
                     {{"planner", planner},
                      {"map", map_path},
                      {"start", {start.x, start.y}},
                      {"goal", {goal.x, goal.y}},
                      {"mask", mask_path},
                      {"model", model_path},
                      {"oracle_mask", oracle_mask_flag},
                      {"time_limit_s", time_limit},
                      {"cost_threshold_m", cost_threshold},
                      {"threshold_multiplier", multiplier},
                      {"tau", tau},
                      {"seed", common.seed}});

    mpt::termination_spec term;
    term.time_limit_s = time_limit;
    term.cost_threshold_m =
        cost_threshold > 0 ? cost_threshold : std::numeric_limits<double>::infinity();
    term.threshold_multiplier = multiplier;

    mpt::mask_grid mask;
    bool have_mask = false;
    double inference_time = 0.0;
    if (!mask_path.empty()) {
        mask = mpt::mask_from_pgm(mpt::read_pgm(mask_path));
        have_mask = true;
    } else if (!model_path.empty()) {
        const mpt::mpt_model model = mpt::load_checkpoint(model_path);
        auto inf = mpt::infer_mask(model, map, start, goal, tau);
        mask = std::move(inf.mask);
        inference_time = inf.inference_time_s;
        have_mask = true;
    } else if (oracle_mask_flag) {
        const auto oracle = mpt::run_oracle(map, robot, start, goal, time_limit,
                                            mpt::derive_seed(common.seed, "oracle"));
        if (!oracle.success) {
            std::ofstream(out_dir + "/result.json")
                << json{{"success", false}, {"failure_reason", "oracle found no path"}}.dump(2) << "\n";
            std::cout << "oracle found no path\n";
            return kExitPlanFailure;
        }
        mpt::dataset_record rec;
        rec.start = start;
        rec.goal = goal;
        rec.path = oracle.path;
        rec.cost = oracle.cost;
        mask = mpt::oracle_mask(rec, map, mpt::model_config::defaults());
        if (!(cost_threshold > 0)) term.cost_threshold_m = oracle.cost;
        have_mask = true;
    }

    const mpt::sampler_region region =
        have_mask ? mpt::sampler_region::with_mask(mask) : mpt::sampler_region::full_map();
    const uint64_t seed = mpt::derive_seed(common.seed, "plan");
    mpt::plan_result res;
    if (planner == "rrtstar")
        res = mpt::rrt_star(map, start, goal, region, term, seed);
    else if (planner == "irrtstar")
        res = mpt::informed_rrt_star(map, start, goal, region, term, seed);
    else if (planner == "sst")
        res = mpt::sst(map, robot, start, goal, region, term, seed);
    else
        throw mpt::config_error("unknown planner '" + planner + "'");

    json rj = plan_result_json(res, robot);
    if (inference_time > 0) rj["inference_time_s"] = inference_time;
    std::ofstream(out_dir + "/result.json") << rj.dump(2) << "\n";
    mpt::write_ppm(out_dir + "/plan.ppm",
                   mpt::render(map, have_mask ? &mask : nullptr, res.path.empty() ? nullptr : &res.path));
    if (res.success)
        std::cout << "solved: cost " << res.cost << " m, " << res.vertices << " vertices, " << res.time_s
                  << " s\n";
    else
        std::cout << "failed: " << res.failure_reason << "\n";
    return res.success ? kExitOk : kExitPlanFailure;
}

int cmd_bench(const common_opts& common, const std::string& preset_name, const std::string& data_dir,
              const std::string& planners_csv, const std::string& model_path, double time_limit,
              double multiplier, double tau, const std::string& out_dir, bool dry_run) {
    std::vector<std::string> planners;
    {
        std::string cur;
        for (char c : planners_csv + ",") {
            if (c == ',') {
                if (!cur.empty()) planners.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
    }
    if (planners.empty()) throw mpt::config_error("bench requires --planners");

    mpt::dataset ds;
    double preset_tl = time_limit, preset_mult = multiplier;
    if (!preset_name.empty()) {
        const auto& preset = mpt::find_preset(preset_name);
        mpt::collect_config cc;
        cc.env = preset.env;
        cc.n_envs = preset.n_envs;
        cc.paths_per_env = preset.paths_per_env;
        cc.robot = preset.robot;
        cc.seed = common.seed;
        cc.threads = common.threads;
        cc.oracle_time_limit_s = preset.oracle_time_limit_s;
        cc.dry_run = dry_run || preset.paper_scale;
        if (preset.paper_scale && !dry_run)
            std::cout << "note: paper-scale preset is registered as a dry-run plan\n";
        ds = mpt::collect_dataset(cc, out_dir + "/dataset", &std::cout);
        if (cc.dry_run) {
            std::cout << "dry run: registered " << preset.n_envs * preset.paths_per_env
                      << " planned records\n";
            write_run_config(out_dir, "bench",
                             {{"preset", preset_name}, {"dry_run", true}, {"seed", common.seed}});
            return kExitOk;
        }
        if (preset_tl <= 0) preset_tl = preset.time_limit_s;
        if (preset_mult <= 0) preset_mult = preset.threshold_multiplier;
    } else if (!data_dir.empty()) {
        ds = mpt::load_dataset(data_dir);
        if (preset_tl <= 0)
            preset_tl = ds.robot.kind == mpt::robot_model::dubins ? 60.0 : 10.0;
        if (preset_mult <= 0) preset_mult = 1.0;
    } else {
        throw mpt::config_error("bench requires --preset or --data");
    }

    std::optional<mpt::mpt_model> model;
    if (!model_path.empty()) model = mpt::load_checkpoint(model_path);

    mpt::eval_config ec;
    ec.planners = planners;
    ec.time_limit_s = preset_tl;
    ec.threshold_multiplier = preset_mult;
    ec.tau = tau;
    ec.seed = common.seed;
    ec.threads = common.threads;
    ec.model = model ? &*model : nullptr;

    write_run_config(out_dir, "bench",
                     {{"preset", preset_name},
                      {"data", data_dir},
                      {"planners", planners},
                      {"model", model_path},
                      {"time_limit_s", ec.time_limit_s},
                      {"threshold_multiplier", ec.threshold_multiplier},
                      {"tau", tau},
                      {"seed", common.seed},
                      {"threads", common.threads}});

    const auto out = mpt::evaluate(ds, ec, out_dir);
    bool any_failure = false;
    std::cout << "planner                 accuracy     n   median time (s)   median vertices\n";
    for (const auto& s : out.summary) {
        std::printf("%-22s  %6.2f%%  %5lld  %14.3f  %16.1f\n", s.planner.c_str(), 100.0 * s.accuracy,
                    static_cast<long long>(s.problems), s.time_q.p50, s.vertex_q.p50);
        if (s.successes < s.problems) any_failure = true;
    }
    std::cout << "results: " << out_dir << "/results.csv, summary: " << out_dir << "/summary.json\n";
    return any_failure ? kExitPlanFailure : kExitOk;
}

int cmd_gradcheck(int trials, uint64_t seed) {
    mpt::gradcheck_suite suite;
    const auto results = suite.check_all(trials, seed);
    bool all_pass = true;
    std::printf("%-20s %12s %8s %8s  %s\n", "op", "max_rel_err", "checked", "skipped", "status");
    for (const auto& r : results) {
        std::printf("%-20s %12.3e %8lld %8lld  %s\n", r.op.c_str(), r.max_rel_err,
                    static_cast<long long>(r.coords_checked), static_cast<long long>(r.coords_skipped),
                    r.pass ? "ok" : "FAIL");
        all_pass = all_pass && r.pass;
    }
    return all_pass ? kExitOk : kExitPlanFailure;
}

int cmd_render(const std::string& map_path, const std::string& mask_path, const std::string& path_json,
               const std::string& probs_path, const std::string& out_path) {
    const mpt::costmap map = mpt::load_pgm(map_path);
    std::optional<mpt::mask_grid> mask;
    if (!mask_path.empty()) mask = mpt::mask_from_pgm(mpt::read_pgm(mask_path));
    std::optional<mpt::gray_image> probs;
    if (!probs_path.empty()) probs = mpt::read_pgm(probs_path);
    std::optional<std::vector<mpt::se2_state>> path;
    if (!path_json.empty()) {
        std::ifstream in(path_json);
        if (!in) throw mpt::io_error("cannot open '" + path_json + "'");
        json j;
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw mpt::io_error("malformed path json: " + std::string(e.what()));
        }
        path.emplace();
        for (const auto& s : j.at("states")) {
            mpt::se2_state st{s[0].get<double>(), s[1].get<double>(), 0.0};
            if (s.size() > 2) st.theta = s[2].get<double>();
            path->push_back(st);
        }
    }
    mpt::write_ppm(out_path, mpt::render(map, mask ? &*mask : nullptr, path ? &*path : nullptr,
                                         probs ? &*probs : nullptr));
    std::cout << "wrote " << out_path << "\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Transformer region proposals for sampling-based motion planning"};
    app.require_subcommand(1);

    common_opts common;
    app.add_option("--seed", common.seed, "top-level seed; sub-seeds derive from it");
    app.add_option("--threads", common.threads, "worker threads for collection/benchmarks")
        ->envname("MPT_THREADS");
    app.add_option("--config", common.config_file, "JSON config file (flags override it)");

    auto* envgen = app.add_subcommand("envgen", "generate forest or maze costmaps");
    std::string eg_kind = "forest", eg_size = "240x240", eg_out;
    int eg_count = 1, eg_obstacles = 20;
    envgen->add_option("--kind", eg_kind, "forest|maze")->check(CLI::IsMember({"forest", "maze"}));
    envgen->add_option("--size", eg_size, "map size WxH in pixels");
    envgen->add_option("--count", eg_count, "number of maps");
    envgen->add_option("--obstacles", eg_obstacles, "obstacle count (forest)");
    envgen->add_option("--out", eg_out, "output directory")->required();

    auto* collect = app.add_subcommand("collect", "oracle-solve start/goal pairs into a dataset");
    std::string co_envs, co_preset, co_robot = "point", co_out;
    int co_paths = 5;
    bool co_dry = false;
    collect->add_option("--envs", co_envs, "directory of .pgm maps (from envgen)");
    collect->add_option("--preset", co_preset, "named preset instead of --envs");
    collect->add_option("--paths", co_paths, "paths per environment");
    collect->add_option("--robot", co_robot, "point|dubins")->check(CLI::IsMember({"point", "dubins"}));
    collect->add_flag("--dry-run", co_dry, "register planned records without running oracles");
    collect->add_option("--out", co_out, "output dataset directory")->required();

    auto* train = app.add_subcommand("train", "train the region proposal network");
    std::string tr_data, tr_out = "model.mptc";
    int64_t tr_steps = 0;
    bool tr_tiny = false;
    train->add_option("--data", tr_data, "dataset directory")->required();
    train->add_option("--out", tr_out, "checkpoint output path");
    train->add_option("--steps", tr_steps, "optimizer steps (overrides config)");
    train->add_flag("--tiny", tr_tiny, "use the small model configuration");

    auto* infer = app.add_subcommand("infer", "propose a region for a query");
    std::string in_model, in_map, in_start, in_goal, in_out;
    double in_tau = 0.5;
    infer->add_option("--model", in_model, "checkpoint path")->required();
    infer->add_option("--map", in_map, "map PGM")->required();
    infer->add_option("--start", in_start, "start x,y in meters")->required();
    infer->add_option("--goal", in_goal, "goal x,y in meters")->required();
    infer->add_option("--tau", in_tau, "selection threshold");
    infer->add_option("--out", in_out, "output directory")->required();

    auto* plan = app.add_subcommand("plan", "plan a single problem");
    std::string pl_planner = "rrtstar", pl_map, pl_start, pl_goal, pl_mask, pl_model, pl_out = ".";
    bool pl_oracle = false;
    double pl_tl = 10.0, pl_thresh = 0.0, pl_mult = 1.0, pl_tau = 0.5;
    plan->add_option("--planner", pl_planner, "rrtstar|irrtstar|sst")
        ->check(CLI::IsMember({"rrtstar", "irrtstar", "sst"}));
    plan->add_option("--map", pl_map, "map PGM")->required();
    plan->add_option("--start", pl_start, "start x,y in meters")->required();
    plan->add_option("--goal", pl_goal, "goal x,y in meters")->required();
    plan->add_option("--mask", pl_mask, "sampling mask PGM");
    plan->add_option("--model", pl_model, "checkpoint for an inferred mask");
    plan->add_flag("--oracle-mask", pl_oracle, "mask from an oracle-found path");
    plan->add_option("--time-limit", pl_tl, "seconds");
    plan->add_option("--cost-threshold", pl_thresh, "meters; 0 = stop at first solution");
    plan->add_option("--multiplier", pl_mult, "threshold multiplier");
    plan->add_option("--tau", pl_tau, "mask threshold (with --model)");
    plan->add_option("--out", pl_out, "output directory");

    auto* bench = app.add_subcommand("bench", "run the evaluation harness");
    std::string be_preset, be_data, be_planners, be_model, be_out;
    double be_tl = 0.0, be_mult = 0.0, be_tau = 0.5;
    bool be_dry = false;
    bench->add_option("--preset", be_preset, "named preset (collects its own dataset)");
    bench->add_option("--data", be_data, "existing dataset directory");
    bench->add_option("--planners", be_planners,
                      "comma list: rrtstar,irrtstar,sst with mpt-/oracle- prefixes")
        ->required();
    bench->add_option("--model", be_model, "checkpoint for mpt-* planners");
    bench->add_option("--time-limit", be_tl, "seconds (0 = preset/robot default)");
    bench->add_option("--multiplier", be_mult, "threshold multiplier (0 = preset default)");
    bench->add_option("--tau", be_tau, "mask threshold");
    bench->add_flag("--dry-run", be_dry, "register the dataset plan without running");
    bench->add_option("--out", be_out, "output directory")->required();

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every op");
    int gc_trials = 5;
    uint64_t gc_seed = 2024;
    gradcheck->add_option("--trials", gc_trials, "trials per op");
    gradcheck->add_option("--seed", gc_seed, "rng seed");

    auto* render = app.add_subcommand("render", "compose map/mask/path/probability images");
    std::string re_map, re_mask, re_path, re_probs, re_out;
    render->add_option("--map", re_map, "map PGM")->required();
    render->add_option("--mask", re_mask, "mask PGM");
    render->add_option("--path", re_path, "plan result JSON");
    render->add_option("--probs", re_probs, "probability PGM");
    render->add_option("--out", re_out, "output PPM")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        common.config = load_config_file(common.config_file);
        if (envgen->parsed())
            return cmd_envgen(common, eg_kind, eg_size, eg_count, eg_obstacles, eg_out);
        if (collect->parsed())
            return cmd_collect(common, co_envs, co_preset, co_paths, co_robot, co_out, co_dry);
        if (train->parsed()) return cmd_train(common, tr_data, tr_out, tr_steps, tr_tiny);
        if (infer->parsed()) return cmd_infer(common, in_model, in_map, in_start, in_goal, in_tau, in_out);
        if (plan->parsed())
            return cmd_plan(common, pl_planner, pl_map, pl_start, pl_goal, pl_mask, pl_model, pl_oracle,
                            pl_tl, pl_thresh, pl_mult, pl_tau, pl_out);
        if (bench->parsed())
            return cmd_bench(common, be_preset, be_data, be_planners, be_model, be_tl, be_mult, be_tau,
                             be_out, be_dry);
        if (gradcheck->parsed()) return cmd_gradcheck(gc_trials, gc_seed);
        if (render->parsed()) return cmd_render(re_map, re_mask, re_path, re_probs, re_out);
    } catch (const mpt::io_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const mpt::config_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const mpt::query_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const mpt::capacity_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const mpt::plan_input_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const mpt::generation_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: corrupt data: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitPlanFailure;
    }
    return kExitUsage;
}
