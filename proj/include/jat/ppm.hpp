#ifndef JAT_PPM_HPP_
#define JAT_PPM_HPP_

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <string>

#include "jat/tensor.hpp"

namespace jat {

// Binary PGM (P5) and PPM (P6) readers and a PPM writer, enough image I/O
// for the captioning demo. Values map to [0, 1].
namespace ppm {

inline int next_int(std::istream& in) {
    // skips whitespace and '#' comments per the netpbm header grammar
    for (;;) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
    int v;
    if (!(in >> v)) throw std::runtime_error("image: malformed netpbm header");
    return v;
}

inline Tensor<float> read(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("image: cannot open " + path);
    std::string magic(2, '\0');
    f.read(magic.data(), 2);
    if (magic != "P5" && magic != "P6") {
        throw std::runtime_error("image: " + path + " is not a binary PGM/PPM file");
    }
    const int channels = magic == "P6" ? 3 : 1;
    const int w = next_int(f);
    const int h = next_int(f);
    const int maxval = next_int(f);
    if (w < 1 || h < 1 || maxval < 1 || maxval > 255) throw std::runtime_error("image: unsupported header in " + path);
    f.get();  // single whitespace after maxval
    std::vector<unsigned char> raw(static_cast<size_t>(w) * h * channels);
    f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!f) throw std::runtime_error("image: truncated pixel data in " + path);
    Tensor<float> img({channels, h, w});
    const float scale = 1.0f / static_cast<float>(maxval);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < channels; ++c) {
                img[(static_cast<int64_t>(c) * h + y) * w + x] =
                    static_cast<float>(raw[(static_cast<size_t>(y) * w + x) * channels + static_cast<size_t>(c)]) * scale;
            }
        }
    }
    return img;
}

inline void write(const std::string& path, const Tensor<float>& img) {
    if (img.rank() != 3 || (img.size(0) != 1 && img.size(0) != 3)) {
        throw std::invalid_argument("image: writer expects CHW with 1 or 3 channels, got " + shape_str(img.shape));
    }
    const int c = img.size(0), h = img.size(1), w = img.size(2);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("image: cannot write " + path);
    f << (c == 3 ? "P6" : "P5") << '\n' << w << ' ' << h << "\n255\n";
    std::vector<unsigned char> raw(static_cast<size_t>(w) * h * c);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int ch = 0; ch < c; ++ch) {
                const float v = std::clamp(img[(static_cast<int64_t>(ch) * h + y) * w + x], 0.0f, 1.0f);
                raw[(static_cast<size_t>(y) * w + x) * c + static_cast<size_t>(ch)] =
                    static_cast<unsigned char>(v * 255.0f + 0.5f);
            }
        }
    }
    f.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

}  // namespace ppm

}  // namespace jat

#endif  // JAT_PPM_HPP_
