#include "pinnlab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace pinnlab {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'P', 'L', 'A', 'B', 'C', 'K', '0', '1'};

void write_u64_le(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64_le(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void write_doubles_le(std::ostream& os, const double* p, std::size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * 8));
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            std::uint64_t bits;
            std::memcpy(&bits, &p[i], 8);
            write_u64_le(os, bits);
        }
    }
}

void read_doubles_le(std::istream& is, double* p, std::size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
        is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * 8));
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            std::uint64_t bits = read_u64_le(is);
            std::memcpy(&p[i], &bits, 8);
        }
    }
}

json spec_json(const ModelSpec& s) {
    json j;
    j["in_dim"] = s.in_dim;
    j["hidden_dim"] = s.hidden_dim;
    j["depth"] = s.depth;
    j["out_dim"] = s.out_dim;
    j["activation"] = activation_name(s.activation);
    j["sine_w0"] = s.sine_w0;
    if (!s.periodic_axes.empty()) {
        json axes = json::array();
        for (const auto& ax : s.periodic_axes)
            axes.push_back({{"periodic", ax.periodic},
                            {"period", ax.period},
                            {"trainable", ax.trainable}});
        j["periodic_axes"] = axes;
    }
    if (s.rff)
        j["rff"] = {{"width", s.rff->width}, {"sigma", s.rff->sigma}, {"mean", s.rff->mean}};
    if (s.rwf) j["rwf"] = {{"mean", s.rwf->mean}, {"stddev", s.rwf->stddev}};
    return j;
}

ModelSpec spec_from(const json& j) {
    ModelSpec s;
    s.in_dim = j.at("in_dim").get<std::size_t>();
    s.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    s.depth = j.at("depth").get<std::size_t>();
    s.out_dim = j.at("out_dim").get<std::size_t>();
    s.activation = activation_from_name(j.at("activation").get<std::string>());
    s.sine_w0 = j.value("sine_w0", 1.0);
    if (j.contains("periodic_axes")) {
        for (const auto& a : j.at("periodic_axes")) {
            AxisPeriodic ax;
            ax.periodic = a.at("periodic").get<bool>();
            ax.period = a.at("period").get<double>();
            ax.trainable = a.value("trainable", false);
            s.periodic_axes.push_back(ax);
        }
    }
    if (j.contains("rff")) {
        RFFSpec r;
        r.width = j["rff"].at("width").get<std::size_t>();
        r.sigma = j["rff"].value("sigma", 10.0);
        r.mean = j["rff"].value("mean", 0.0);
        s.rff = r;
    }
    if (j.contains("rwf")) {
        RWFSpec r;
        r.mean = j["rwf"].value("mean", 1.0);
        r.stddev = j["rwf"].value("stddev", 0.1);
        s.rwf = r;
    }
    return s;
}

}  // namespace

std::string model_spec_to_json(const ModelSpec& spec) { return spec_json(spec).dump(); }

ModelSpec model_spec_from_json(const std::string& text) {
    return spec_from(json::parse(text));
}

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return &t.value;
    return nullptr;
}

void Checkpoint::save(const std::string& path) const {
    json header;
    header["model"] = spec_json(spec);
    header["seed"] = seed;
    json dir = json::array();
    for (const auto& t : tensors)
        dir.push_back({{"name", t.name}, {"shape", t.value.shape()}});
    header["tensors"] = dir;
    header["scalars"] = scalars;
    std::string text = header.dump();

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw TensorError("checkpoint: cannot open for writing: " + path);
    os.write(kMagic, 8);
    write_u64_le(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& t : tensors) write_doubles_le(os, t.value.data(), t.value.size());
    if (!os) throw TensorError("checkpoint: write failed: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw TensorError("checkpoint: cannot open: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw TensorError("checkpoint: bad magic in " + path);
    std::uint64_t hlen = read_u64_le(is);
    std::string text(hlen, '\0');
    is.read(text.data(), static_cast<std::streamsize>(hlen));
    json header = json::parse(text);

    Checkpoint ck;
    ck.spec = spec_from(header.at("model"));
    ck.seed = header.value("seed", 0ULL);
    if (header.contains("scalars"))
        ck.scalars = header.at("scalars").get<std::map<std::string, double>>();
    for (const auto& d : header.at("tensors")) {
        NamedTensor t;
        t.name = d.at("name").get<std::string>();
        std::vector<std::size_t> shape = d.at("shape").get<std::vector<std::size_t>>();
        t.value = Tensor(shape);
        read_doubles_le(is, t.value.data(), t.value.size());
        ck.tensors.push_back(std::move(t));
    }
    if (!is) throw TensorError("checkpoint: truncated payload in " + path);
    return ck;
}

Checkpoint Checkpoint::from_model(const Model& m, std::uint64_t seed) {
    Checkpoint ck;
    ck.spec = m.spec();
    ck.seed = seed;
    for (const auto& p : m.trainable()) ck.tensors.push_back(p);
    if (m.spec().rff) ck.tensors.push_back({"rff.B", m.rff_matrix()});
    return ck;
}

Model Checkpoint::restore_model() const {
    Model m(spec, seed);
    for (auto& p : m.trainable()) {
        const Tensor* t = find(p.name);
        if (!t) throw TensorError("checkpoint: missing tensor " + p.name);
        if (t->shape() != p.value.shape())
            throw TensorError("checkpoint: shape mismatch for " + p.name);
        p.value = *t;
    }
    if (spec.rff) {
        const Tensor* B = find("rff.B");
        if (!B) throw TensorError("checkpoint: missing tensor rff.B");
        m.rff_matrix_mut() = *B;
    }
    return m;
}

}  // namespace pinnlab
