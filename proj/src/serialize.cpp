#include "sargan/serialize.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

namespace sargan {

namespace {

constexpr char kWeightMagic[8] = {'S', 'A', 'R', 'G', 'A', 'N', '0', '1'};
constexpr char kTrailerMagic[8] = {'S', 'G', 'T', 'R', 'A', 'I', 'L', '1'};

void require(bool ok, const std::string& msg) {
    if (!ok) throw DataError(msg);
}

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T take(std::istream& in, const char* what) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    require(static_cast<bool>(in), std::string("checkpoint: truncated ") + what);
    return v;
}

void write_record(std::ostream& out, const std::string& name, const Tensor& t) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape) put<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    for (Real v : t.values) put<double>(out, static_cast<double>(v));
}

std::pair<std::string, Tensor> read_record(std::istream& in) {
    const auto name_len = take<std::uint32_t>(in, "record name length");
    require(name_len > 0 && name_len < 4096, "checkpoint: implausible record name length");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    require(static_cast<bool>(in), "checkpoint: truncated record name");
    const auto rank = take<std::uint32_t>(in, "record rank");
    require(rank >= 1 && rank <= 4, "checkpoint: bad record rank");
    std::vector<int> shape(rank);
    for (auto& d : shape) {
        const auto e = take<std::uint64_t>(in, "record extent");
        require(e > 0 && e < (1ULL << 31), "checkpoint: bad record extent");
        d = static_cast<int>(e);
    }
    Tensor t(shape);
    for (auto& v : t.values) v = static_cast<Real>(take<double>(in, "record data"));
    return {std::move(name), std::move(t)};
}

std::vector<NamedTensor> model_tensors(GanModel& m) {
    std::vector<NamedTensor> all = named_tensors(m.gd_spec, m.gd);
    for (auto& nt : named_tensors(m.gc_spec, m.gc)) all.push_back(nt);
    for (auto& nt : named_tensors(m.d_spec, m.d)) all.push_back(nt);
    return all;
}

void write_weight_section(std::ostream& out, GanModel& model) {
    out.write(kWeightMagic, sizeof(kWeightMagic));
    const auto tensors = model_tensors(model);
    put<std::uint64_t>(out, tensors.size());
    for (const NamedTensor& nt : tensors) write_record(out, nt.name, *nt.tensor);
}

void read_weight_section(std::istream& in, GanModel& model, const std::string& path) {
    char magic[sizeof(kWeightMagic)];
    in.read(magic, sizeof(magic));
    require(in.gcount() == sizeof(magic) && std::memcmp(magic, kWeightMagic, sizeof(magic)) == 0,
            "checkpoint: unknown magic in " + path);
    const auto count = take<std::uint64_t>(in, "record count");
    std::map<std::string, Tensor> records;
    for (std::uint64_t i = 0; i < count; ++i) {
        auto [name, t] = read_record(in);
        records.emplace(std::move(name), std::move(t));
    }
    for (NamedTensor& nt : model_tensors(model)) {
        const auto it = records.find(nt.name);
        require(it != records.end(), "checkpoint: missing tensor " + nt.name + " in " + path);
        if (it->second.shape != nt.tensor->shape)
            throw DataError("checkpoint: shape mismatch for " + nt.name + ": file " +
                            it->second.shape_str() + " vs spec " + nt.tensor->shape_str());
        nt.tensor->values = std::move(it->second.values);
        records.erase(it);
    }
    require(records.empty(), "checkpoint: unexpected extra tensors in " + path);
}

} // namespace

void save_weights(const std::filesystem::path& path, GanModel& model) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "checkpoint: cannot open " + path.string() + " for writing");
    write_weight_section(out, model);
    require(out.good(), "checkpoint: write failed for " + path.string());
}

void load_weights(const std::filesystem::path& path, GanModel& model) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "checkpoint: cannot open " + path.string());
    read_weight_section(in, model, path.string());
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "checkpoint: cannot open " + path.string() + " for writing");
    Checkpoint& mut = const_cast<Checkpoint&>(ck); // named_tensors wants mutable access
    write_weight_section(out, mut.model);

    out.write(kTrailerMagic, sizeof(kTrailerMagic));
    put<std::int64_t>(out, ck.epoch);
    put<std::int64_t>(out, ck.step);
    put<std::uint64_t>(out, ck.rng_state);
    put<std::int64_t>(out, ck.adam_g.t);
    put<std::int64_t>(out, ck.adam_d.t);
    put<std::uint64_t>(out, ck.adam_g.m.size());
    for (std::size_t i = 0; i < ck.adam_g.m.size(); ++i) {
        write_record(out, "adam_g." + std::to_string(i) + ".m", ck.adam_g.m[i]);
        write_record(out, "adam_g." + std::to_string(i) + ".v", ck.adam_g.v[i]);
    }
    put<std::uint64_t>(out, ck.adam_d.m.size());
    for (std::size_t i = 0; i < ck.adam_d.m.size(); ++i) {
        write_record(out, "adam_d." + std::to_string(i) + ".m", ck.adam_d.m[i]);
        write_record(out, "adam_d." + std::to_string(i) + ".v", ck.adam_d.v[i]);
    }
    require(out.good(), "checkpoint: write failed for " + path.string());
}

void load_checkpoint(const std::filesystem::path& path, Checkpoint& ck) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "checkpoint: cannot open " + path.string());
    read_weight_section(in, ck.model, path.string());

    char magic[sizeof(kTrailerMagic)];
    in.read(magic, sizeof(magic));
    require(in.gcount() == sizeof(magic) &&
                std::memcmp(magic, kTrailerMagic, sizeof(magic)) == 0,
            "checkpoint: missing trailer in " + path.string());
    ck.epoch = take<std::int64_t>(in, "epoch");
    ck.step = take<std::int64_t>(in, "step");
    ck.rng_state = take<std::uint64_t>(in, "rng state");
    ck.adam_g.t = take<std::int64_t>(in, "adam_g.t");
    ck.adam_d.t = take<std::int64_t>(in, "adam_d.t");
    const auto load_moments = [&](AdamState& st) {
        const auto n = take<std::uint64_t>(in, "moment count");
        st.m.clear();
        st.v.clear();
        for (std::uint64_t i = 0; i < n; ++i) {
            auto [mn, mt] = read_record(in);
            auto [vn, vt] = read_record(in);
            require(mn.ends_with(".m") && vn.ends_with(".v"),
                    "checkpoint: malformed moment records in " + path.string());
            st.m.push_back(std::move(mt));
            st.v.push_back(std::move(vt));
        }
    };
    load_moments(ck.adam_g);
    load_moments(ck.adam_d);
}

} // namespace sargan
