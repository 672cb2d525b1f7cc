#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mpt/errors.hpp"

namespace mpt {

struct gray_image {
    int width = 0, height = 0;
    std::vector<uint8_t> pixels;                 // row-major
    std::vector<std::string> comments;           // header comments, '#' stripped
};

namespace detail {

// Reads one whitespace-delimited header token, collecting '#' comments.
inline std::string next_pnm_token(std::istream& in, std::vector<std::string>* comments) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            std::string line;
            std::getline(in, line);
            if (comments) comments->push_back(line);
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
    if (tok.empty()) throw io_error("truncated PNM header");
    return tok;
}

inline int parse_pnm_int(const std::string& tok, const char* what) {
    try {
        size_t pos = 0;
        const int v = std::stoi(tok, &pos);
        if (pos != tok.size() || v <= 0) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw io_error(std::string("bad PNM ") + what + ": '" + tok + "'");
    }
}

} // namespace detail

inline gray_image read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open '" + path + "'");
    gray_image img;
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (!in || m0 != 'P' || m1 != '5') throw io_error("'" + path + "': not a binary PGM (P5)");
    img.width = detail::parse_pnm_int(detail::next_pnm_token(in, &img.comments), "width");
    img.height = detail::parse_pnm_int(detail::next_pnm_token(in, &img.comments), "height");
    const int maxval = detail::parse_pnm_int(detail::next_pnm_token(in, &img.comments), "maxval");
    if (maxval != 255) throw io_error("'" + path + "': unsupported maxval " + std::to_string(maxval));
    img.pixels.resize(static_cast<size_t>(img.width) * img.height);
    in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    if (static_cast<size_t>(in.gcount()) != img.pixels.size())
        throw io_error("'" + path + "': truncated pixel data");
    return img;
}

inline void write_pgm(const std::string& path, int width, int height, const std::vector<uint8_t>& pixels,
                      const std::vector<std::string>& comments = {}) {
    if (static_cast<size_t>(width) * height != pixels.size())
        throw io_error("write_pgm: pixel count does not match dimensions");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write '" + path + "'");
    out << "P5\n";
    for (const auto& c : comments) out << "#" << c << "\n";
    out << width << " " << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    if (!out) throw io_error("short write to '" + path + "'");
}

struct rgb_image {
    int width = 0, height = 0;
    std::vector<uint8_t> pixels; // row-major, 3 bytes per pixel

    rgb_image() = default;
    rgb_image(int w, int h, uint8_t r = 255, uint8_t g = 255, uint8_t b = 255)
        : width(w), height(h), pixels(static_cast<size_t>(w) * h * 3) {
        for (size_t i = 0; i < pixels.size(); i += 3) {
            pixels[i] = r;
            pixels[i + 1] = g;
            pixels[i + 2] = b;
        }
    }

    void set(int row, int col, uint8_t r, uint8_t g, uint8_t b) {
        if (row < 0 || col < 0 || row >= height || col >= width) return;
        const size_t i = (static_cast<size_t>(row) * width + col) * 3;
        pixels[i] = r;
        pixels[i + 1] = g;
        pixels[i + 2] = b;
    }

    void get(int row, int col, uint8_t& r, uint8_t& g, uint8_t& b) const {
        const size_t i = (static_cast<size_t>(row) * width + col) * 3;
        r = pixels[i];
        g = pixels[i + 1];
        b = pixels[i + 2];
    }
};

inline void write_ppm(const std::string& path, const rgb_image& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write '" + path + "'");
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size()));
    if (!out) throw io_error("short write to '" + path + "'");
}

} // namespace mpt
