#include "sargan/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace sargan {

namespace {

constexpr char kTensorMagic[8] = {'S', 'G', 'T', 'E', 'N', 'S', '0', '1'};

void require(bool ok, const std::string& msg) {
    if (!ok) throw DataError(msg);
}

int pnm_token(std::istream& in) {
    // skips whitespace and '#' comments
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
    require(static_cast<bool>(in >> v), "pnm: malformed header");
    return v;
}

} // namespace

Tensor gray_bt601(const Tensor& rgb) {
    if (rgb.rank() != 3 || rgb.shape[0] != 3)
        throw DimensionError("gray: expected {3,H,W}, got " + rgb.shape_str());
    const int h = rgb.shape[1], w = rgb.shape[2];
    Tensor out({1, h, w});
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (std::size_t i = 0; i < plane; ++i)
        out.values[i] = Real(0.299) * rgb.values[i] + Real(0.587) * rgb.values[plane + i] +
                        Real(0.114) * rgb.values[2 * plane + i];
    return out;
}

Tensor clamp01(const Tensor& img) {
    Tensor out = img;
    for (auto& v : out.values) v = std::min(Real(1), std::max(Real(0), v));
    return out;
}

void write_pnm(const std::filesystem::path& path, const Tensor& img, int bits) {
    if (img.rank() != 3 || (img.shape[0] != 1 && img.shape[0] != 3))
        throw DimensionError("pnm: expected {1,H,W} or {3,H,W}, got " + img.shape_str());
    if (bits != 8 && bits != 16) throw ContractError("pnm: bits must be 8 or 16");
    const int c = img.shape[0], h = img.shape[1], w = img.shape[2];
    const int maxval = bits == 8 ? 255 : 65535;

    std::ofstream out(path, std::ios::binary);
    require(out.good(), "pnm: cannot open " + path.string() + " for writing");
    out << (c == 1 ? "P5" : "P6") << '\n' << w << ' ' << h << '\n' << maxval << '\n';

    const std::size_t plane = static_cast<std::size_t>(h) * w;
    std::vector<unsigned char> buf;
    buf.reserve(plane * c * (bits / 8));
    for (std::size_t i = 0; i < plane; ++i) {
        for (int ch = 0; ch < c; ++ch) {
            double v = static_cast<double>(img.values[ch * plane + i]);
            v = std::min(1.0, std::max(0.0, v));
            const unsigned q = static_cast<unsigned>(std::lround(v * maxval));
            if (bits == 16) buf.push_back(static_cast<unsigned char>(q >> 8));
            buf.push_back(static_cast<unsigned char>(q & 0xFF));
        }
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    require(out.good(), "pnm: write failed for " + path.string());
}

Tensor read_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "pnm: cannot open " + path.string());
    char p, kind;
    in.get(p);
    in.get(kind);
    require(p == 'P' && (kind == '5' || kind == '6'), "pnm: not a binary PGM/PPM: " + path.string());
    const int c = kind == '5' ? 1 : 3;
    const int w = pnm_token(in);
    const int h = pnm_token(in);
    const int maxval = pnm_token(in);
    require(maxval == 255 || maxval == 65535, "pnm: unsupported maxval");
    in.get(); // single whitespace after maxval

    const int bytes = maxval == 255 ? 1 : 2;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    std::vector<unsigned char> buf(plane * c * bytes);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    require(in.gcount() == static_cast<std::streamsize>(buf.size()),
            "pnm: truncated pixel data in " + path.string());

    Tensor img({c, h, w});
    for (std::size_t i = 0; i < plane; ++i)
        for (int ch = 0; ch < c; ++ch) {
            const std::size_t off = (i * c + ch) * bytes;
            unsigned q = buf[off];
            if (bytes == 2) q = (q << 8) | buf[off + 1];
            img.values[ch * plane + i] = static_cast<Real>(q) / static_cast<Real>(maxval);
        }
    return img;
}

void write_tensor_file(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "tensor: cannot open " + path.string() + " for writing");
    out.write(kTensorMagic, sizeof(kTensorMagic));
    const std::uint32_t rank = static_cast<std::uint32_t>(t.rank());
    out.write(reinterpret_cast<const char*>(&rank), sizeof(rank));
    for (int d : t.shape) {
        const std::uint64_t e = static_cast<std::uint64_t>(d);
        out.write(reinterpret_cast<const char*>(&e), sizeof(e));
    }
    for (Real v : t.values) {
        const double d = static_cast<double>(v);
        out.write(reinterpret_cast<const char*>(&d), sizeof(d));
    }
    require(out.good(), "tensor: write failed for " + path.string());
}

Tensor read_tensor_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "tensor: cannot open " + path.string());
    char magic[sizeof(kTensorMagic)];
    in.read(magic, sizeof(magic));
    require(in.gcount() == sizeof(magic) && std::memcmp(magic, kTensorMagic, sizeof(magic)) == 0,
            "tensor: bad magic in " + path.string());
    std::uint32_t rank = 0;
    in.read(reinterpret_cast<char*>(&rank), sizeof(rank));
    require(in.good() && rank >= 1 && rank <= 4, "tensor: bad rank in " + path.string());
    std::vector<int> shape(rank);
    for (auto& d : shape) {
        std::uint64_t e = 0;
        in.read(reinterpret_cast<char*>(&e), sizeof(e));
        require(in.good() && e > 0 && e < (1ULL << 31), "tensor: bad extent in " + path.string());
        d = static_cast<int>(e);
    }
    Tensor t(shape);
    for (auto& v : t.values) {
        double d = 0;
        in.read(reinterpret_cast<char*>(&d), sizeof(d));
        v = static_cast<Real>(d);
    }
    require(in.good(), "tensor: truncated data in " + path.string());
    return t;
}

} // namespace sargan
