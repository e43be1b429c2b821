#include "sargan/corpus.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "sargan/rng.hpp"

namespace sargan {

namespace {

struct Color {
    double r, g, b;
};

Color random_color(SplitMix64& rng) {
    return {rng.next_uniform(0.08, 0.92), rng.next_uniform(0.08, 0.92),
            rng.next_uniform(0.08, 0.92)};
}

} // namespace

Tensor procedural_image(std::uint64_t seed, int size) {
    if (size < 8) throw ContractError("procedural_image: size must be >= 8");
    SplitMix64 rng(seed);
    Tensor img({3, size, size});
    const std::size_t plane = static_cast<std::size_t>(size) * size;

    // gradient background between two colors along a random direction
    const Color c0 = random_color(rng), c1 = random_color(rng);
    const double theta = rng.next_uniform(0, 2 * M_PI);
    const double dx = std::cos(theta), dy = std::sin(theta);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double t =
                0.5 + 0.5 * (dx * (2.0 * x / size - 1.0) + dy * (2.0 * y / size - 1.0)) / 1.4142;
            const std::size_t i = static_cast<std::size_t>(y) * size + x;
            img.values[i] = static_cast<Real>(c0.r + t * (c1.r - c0.r));
            img.values[plane + i] = static_cast<Real>(c0.g + t * (c1.g - c0.g));
            img.values[2 * plane + i] = static_cast<Real>(c0.b + t * (c1.b - c0.b));
        }

    // colored shapes: filled circles and axis-aligned rectangles
    const int shapes = 2 + static_cast<int>(rng.next_u64() % 4);
    for (int s = 0; s < shapes; ++s) {
        const Color c = random_color(rng);
        const bool circle = rng.next_u64() % 2 == 0;
        if (circle) {
            const double cx = rng.next_uniform(0.1, 0.9) * size;
            const double cy = rng.next_uniform(0.1, 0.9) * size;
            const double rad = rng.next_uniform(0.08, 0.3) * size;
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x) {
                    const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                    if (d2 <= rad * rad) {
                        const std::size_t i = static_cast<std::size_t>(y) * size + x;
                        img.values[i] = static_cast<Real>(c.r);
                        img.values[plane + i] = static_cast<Real>(c.g);
                        img.values[2 * plane + i] = static_cast<Real>(c.b);
                    }
                }
        } else {
            int x0 = static_cast<int>(rng.next_uniform(0, 0.8) * size);
            int y0 = static_cast<int>(rng.next_uniform(0, 0.8) * size);
            int x1 = x0 + 1 + static_cast<int>(rng.next_uniform(0.05, 0.4) * size);
            int y1 = y0 + 1 + static_cast<int>(rng.next_uniform(0.05, 0.4) * size);
            x1 = std::min(x1, size);
            y1 = std::min(y1, size);
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) {
                    const std::size_t i = static_cast<std::size_t>(y) * size + x;
                    img.values[i] = static_cast<Real>(c.r);
                    img.values[plane + i] = static_cast<Real>(c.g);
                    img.values[2 * plane + i] = static_cast<Real>(c.b);
                }
        }
    }

    // light sinusoidal texture on all channels
    if (rng.next_u64() % 2 == 0) {
        const double fx = rng.next_uniform(1, 5), fy = rng.next_uniform(1, 5);
        const double amp = rng.next_uniform(0.02, 0.1);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                const double m =
                    1.0 + amp * std::sin(2 * M_PI * (fx * x / size + fy * y / size));
                const std::size_t i = static_cast<std::size_t>(y) * size + x;
                for (int ch = 0; ch < 3; ++ch) {
                    double v = static_cast<double>(img.values[ch * plane + i]) * m;
                    img.values[ch * plane + i] =
                        static_cast<Real>(std::min(1.0, std::max(0.0, v)));
                }
            }
    }
    return img;
}

std::vector<Tensor> procedural_corpus(int count, int size, std::uint64_t seed) {
    if (count < 1) throw ContractError("procedural_corpus: count must be >= 1");
    SplitMix64 master(seed);
    std::vector<Tensor> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) out.push_back(procedural_image(master.next_u64(), size));
    return out;
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
    std::ofstream out(path);
    if (!out.good()) throw DataError("manifest: cannot open " + path.string() + " for writing");
    out << "# seed=" << manifest.seed << "\n# looks=" << manifest.looks << "\n";
    for (const ManifestEntry& e : manifest.entries)
        out << e.clean << '\t' << e.gray << '\t' << e.speckled << '\n';
    if (!out.good()) throw DataError("manifest: write failed for " + path.string());
}

Manifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in.good()) throw DataError("manifest: cannot open " + path.string());
    Manifest m;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq != std::string::npos) {
                const std::string key = line.substr(1, eq - 1);
                const std::string val = line.substr(eq + 1);
                if (key.find("seed") != std::string::npos)
                    m.seed = std::stoull(val);
                else if (key.find("looks") != std::string::npos)
                    m.looks = std::stoi(val);
            }
            continue;
        }
        std::istringstream row(line);
        ManifestEntry e;
        if (!std::getline(row, e.clean, '\t') || !std::getline(row, e.gray, '\t') ||
            !std::getline(row, e.speckled, '\t'))
            throw DataError("manifest: malformed line in " + path.string() + ": " + line);
        m.entries.push_back(std::move(e));
    }
    return m;
}

} // namespace sargan
