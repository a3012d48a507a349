#include "lfvit/image_io.hpp"

#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <vector>

namespace lfvit {

namespace {

// Reads the next PPM header token, skipping whitespace and '#' comments.
bool next_header_token(std::istream& in, std::string& tok) {
    tok.clear();
    int ch = in.get();
    for (;;) {
        while (ch != EOF && std::isspace(ch)) ch = in.get();
        if (ch == '#') {
            while (ch != EOF && ch != '\n') ch = in.get();
            continue;
        }
        break;
    }
    while (ch != EOF && !std::isspace(ch) && ch != '#') {
        tok.push_back(static_cast<char>(ch));
        ch = in.get();
    }
    // The single whitespace byte after the last token is consumed here, which
    // is exactly the separator the P6 payload definition requires.
    return !tok.empty();
}

int parse_header_int(const std::string& tok, const char* what) {
    if (tok.empty() || tok.size() > 9) {
        throw IoError(std::string("malformed PPM header: bad ") + what + " '" + tok + "'");
    }
    for (char c : tok) {
        if (!std::isdigit(static_cast<unsigned char>(c))) {
            throw IoError(std::string("malformed PPM header: bad ") + what + " '" + tok + "'");
        }
    }
    return std::stoi(tok);
}

}  // namespace

Tensor load_image(const std::string& path, int expected_side) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image file '" + path + "'");

    std::string tok;
    if (!next_header_token(in, tok) || tok != "P6") {
        throw IoError("malformed PPM header in '" + path + "': expected magic P6, got '" + tok +
                      "'");
    }
    std::string wtok, htok, mtok;
    if (!next_header_token(in, wtok) || !next_header_token(in, htok) ||
        !next_header_token(in, mtok)) {
        throw IoError("malformed PPM header in '" + path + "': missing dimensions or maxval");
    }
    const int w = parse_header_int(wtok, "width");
    const int h = parse_header_int(htok, "height");
    const int maxval = parse_header_int(mtok, "maxval");
    if (w <= 0 || h <= 0) {
        throw IoError("malformed PPM header in '" + path + "': nonpositive dimensions");
    }
    if (maxval != 255) {
        throw IoError("malformed PPM header in '" + path + "': maxval must be 255, got " +
                      std::to_string(maxval));
    }
    if (w != h || (expected_side > 0 && w != expected_side)) {
        throw IoError("image '" + path + "' has dimensions " + std::to_string(w) + "x" +
                      std::to_string(h) + ", expected " +
                      (expected_side > 0 ? std::to_string(expected_side) + "x" +
                                               std::to_string(expected_side)
                                         : std::string("a square image")));
    }

    const size_t need = static_cast<size_t>(w) * static_cast<size_t>(h) * 3u;
    std::vector<std::uint8_t> bytes(need);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(need));
    const size_t got = static_cast<size_t>(in.gcount());
    if (got != need) {
        throw IoError("truncated PPM payload in '" + path + "': expected " +
                      std::to_string(need) + " bytes, got " + std::to_string(got));
    }

    Tensor img = Tensor::zeros({3, h, w});
    const float inv = 1.0f / 255.0f;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const size_t base = (static_cast<size_t>(y) * w + x) * 3u;
            for (int c = 0; c < 3; ++c) {
                img.data[static_cast<size_t>(c) * h * w + static_cast<size_t>(y) * w + x] =
                    static_cast<float>(bytes[base + static_cast<size_t>(c)]) * inv;
            }
        }
    }
    return img;
}

void save_image(const std::string& path, const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != 3) {
        throw DimError("save_image: expected a [3 x H x W] tensor, got " + image.shape_str());
    }
    const int h = image.dim(1), w = image.dim(2);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write image file '" + path + "'");
    out << "P6\n" << w << " " << h << "\n255\n";
    std::vector<std::uint8_t> bytes(static_cast<size_t>(w) * static_cast<size_t>(h) * 3u);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                float v = image.data[static_cast<size_t>(c) * h * w +
                                     static_cast<size_t>(y) * w + x];
                v = std::min(1.0f, std::max(0.0f, v));
                bytes[(static_cast<size_t>(y) * w + x) * 3u + static_cast<size_t>(c)] =
                    static_cast<std::uint8_t>(std::lround(v * 255.0f));
            }
        }
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing image payload to '" + path + "'");
}

}  // namespace lfvit
