#include "diffpur/tensor_io.hpp"

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>

#include "diffpur/errors.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace diffpur {

namespace {

void write_le64(std::ofstream& out, std::uint64_t v) {
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint64_t read_le64(std::ifstream& in) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return v;
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw IoError(path + ": " + e.what());
    }
    return j;
}

void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << j.dump(2) << '\n';
    if (!out) throw IoError("short write to " + path);
}

std::string tensor_ref(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

}  // namespace

void save_tensor(const std::string& base, const Tensor& t) {
    json sidecar = {{"shape", t.shape()}, {"dtype", "f64"}, {"order", "row-major"}};
    write_json_file(base + ".json", sidecar);
    std::ofstream bin(base + ".bin", std::ios::binary);
    if (!bin) throw IoError("cannot open " + base + ".bin for writing");
    for (int i = 0; i < t.size(); ++i)
        write_le64(bin, std::bit_cast<std::uint64_t>(t[i]));
    if (!bin) throw IoError("short write to " + base + ".bin");
}

Tensor load_tensor(const std::string& base) {
    json sidecar = read_json_file(base + ".json");
    if (sidecar.value("dtype", "") != "f64")
        throw IoError(base + ".json: unsupported dtype");
    if (sidecar.value("order", "") != "row-major")
        throw IoError(base + ".json: unsupported order");
    std::vector<int> shape = sidecar.at("shape").get<std::vector<int>>();
    Tensor t(shape);
    std::ifstream bin(base + ".bin", std::ios::binary);
    if (!bin) throw IoError("cannot open " + base + ".bin");
    for (int i = 0; i < t.size(); ++i)
        t[i] = std::bit_cast<double>(read_le64(bin));
    if (!bin) throw IoError(base + ".bin is shorter than its sidecar shape");
    return t;
}

Tensor stack_tensors(const std::vector<Tensor>& items) {
    if (items.empty()) throw ShapeError("cannot stack zero tensors");
    std::vector<int> shape = items[0].shape();
    for (const Tensor& t : items)
        if (!t.same_shape(items[0])) throw ShapeError("stack members disagree in shape");
    std::vector<int> out_shape;
    out_shape.push_back(static_cast<int>(items.size()));
    out_shape.insert(out_shape.end(), shape.begin(), shape.end());
    Tensor out(out_shape);
    const int per = items[0].size();
    for (int n = 0; n < static_cast<int>(items.size()); ++n)
        for (int i = 0; i < per; ++i) out[n * per + i] = items[n][i];
    return out;
}

std::vector<Tensor> unstack_tensor(const Tensor& stacked) {
    const std::vector<int>& shape = stacked.shape();
    if (shape.size() < 2) throw ShapeError("unstack needs a batch axis");
    std::vector<int> inner(shape.begin() + 1, shape.end());
    const int per = checked_volume(inner);
    std::vector<Tensor> out;
    out.reserve(shape[0]);
    for (int n = 0; n < shape[0]; ++n) {
        Tensor t(inner);
        for (int i = 0; i < per; ++i) t[i] = stacked[n * per + i];
        out.push_back(std::move(t));
    }
    return out;
}

void save_classifier(const std::string& dir, const Classifier& m) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
    json manifest;
    if (const auto* lin = std::get_if<SoftmaxLinear>(&m)) {
        manifest = {{"kind", "softmax_linear"},
                    {"input_dim", lin->input_dim},
                    {"num_classes", lin->num_classes},
                    {"tensors", {"W", "b"}}};
        save_tensor(tensor_ref(dir, "W"),
                    Tensor({lin->num_classes, lin->input_dim}, lin->W));
        save_tensor(tensor_ref(dir, "b"), Tensor({lin->num_classes}, lin->b));
    } else {
        const auto& mlp = std::get<Mlp1>(m);
        manifest = {{"kind", "mlp1"},
                    {"input_dim", mlp.input_dim},
                    {"hidden_dim", mlp.hidden_dim},
                    {"num_classes", mlp.num_classes},
                    {"activation", "tanh"},
                    {"tensors", {"W1", "b1", "W2", "b2"}}};
        save_tensor(tensor_ref(dir, "W1"), Tensor({mlp.hidden_dim, mlp.input_dim}, mlp.W1));
        save_tensor(tensor_ref(dir, "b1"), Tensor({mlp.hidden_dim}, mlp.b1));
        save_tensor(tensor_ref(dir, "W2"), Tensor({mlp.num_classes, mlp.hidden_dim}, mlp.W2));
        save_tensor(tensor_ref(dir, "b2"), Tensor({mlp.num_classes}, mlp.b2));
    }
    write_json_file((fs::path(dir) / "model.json").string(), manifest);
}

namespace {

std::vector<double> load_flat(const std::string& dir, const std::string& name,
                              const std::vector<int>& want_shape) {
    Tensor t = load_tensor(tensor_ref(dir, name));
    if (t.shape() != want_shape)
        throw IoError(name + " tensor shape disagrees with the model manifest");
    return t.data();
}

}  // namespace

Classifier load_classifier(const std::string& dir) {
    json manifest = read_json_file((fs::path(dir) / "model.json").string());
    std::string kind = manifest.value("kind", "");
    if (kind == "softmax_linear") {
        SoftmaxLinear lin;
        lin.input_dim = manifest.at("input_dim").get<int>();
        lin.num_classes = manifest.at("num_classes").get<int>();
        lin.W = load_flat(dir, "W", {lin.num_classes, lin.input_dim});
        lin.b = load_flat(dir, "b", {lin.num_classes});
        return lin;
    }
    if (kind == "mlp1") {
        if (manifest.value("activation", "tanh") != "tanh")
            throw IoError(dir + ": unsupported activation");
        Mlp1 mlp;
        mlp.input_dim = manifest.at("input_dim").get<int>();
        mlp.hidden_dim = manifest.at("hidden_dim").get<int>();
        mlp.num_classes = manifest.at("num_classes").get<int>();
        mlp.W1 = load_flat(dir, "W1", {mlp.hidden_dim, mlp.input_dim});
        mlp.b1 = load_flat(dir, "b1", {mlp.hidden_dim});
        mlp.W2 = load_flat(dir, "W2", {mlp.num_classes, mlp.hidden_dim});
        mlp.b2 = load_flat(dir, "b2", {mlp.num_classes});
        return mlp;
    }
    throw IoError(dir + ": unknown model kind '" + kind + "'");
}

void save_dataset(const std::string& dir, const GeneratedData& g) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
    const DatasetMeta& meta = g.data.meta;
    json doc = {{"meta",
                 {{"num_classes", meta.num_classes},
                  {"H", meta.H},
                  {"W", meta.W},
                  {"C", meta.C},
                  {"per_class", meta.per_class},
                  {"contrast", meta.contrast},
                  {"var", meta.var},
                  {"seed", meta.seed}}},
                {"labels", g.data.labels},
                {"mixture", {{"weights", g.mixture.weights}, {"var", g.mixture.var}}}};
    write_json_file((fs::path(dir) / "dataset.json").string(), doc);
    save_tensor(tensor_ref(dir, "images"), stack_tensors(g.data.images));
    save_tensor(tensor_ref(dir, "means"), stack_tensors(g.mixture.means));
}

GeneratedData load_dataset(const std::string& dir) {
    json doc = read_json_file((fs::path(dir) / "dataset.json").string());
    GeneratedData g;
    const json& meta = doc.at("meta");
    g.data.meta.num_classes = meta.at("num_classes").get<int>();
    g.data.meta.H = meta.at("H").get<int>();
    g.data.meta.W = meta.at("W").get<int>();
    g.data.meta.C = meta.at("C").get<int>();
    g.data.meta.per_class = meta.at("per_class").get<int>();
    g.data.meta.contrast = meta.at("contrast").get<double>();
    g.data.meta.var = meta.at("var").get<double>();
    g.data.meta.seed = meta.at("seed").get<std::uint64_t>();
    g.data.labels = doc.at("labels").get<std::vector<int>>();
    g.data.images = unstack_tensor(load_tensor(tensor_ref(dir, "images")));
    g.mixture.weights = doc.at("mixture").at("weights").get<std::vector<double>>();
    g.mixture.var = doc.at("mixture").at("var").get<double>();
    g.mixture.means = unstack_tensor(load_tensor(tensor_ref(dir, "means")));
    if (g.data.images.size() != g.data.labels.size())
        throw IoError(dir + ": image and label counts disagree");
    validate(g.mixture);
    return g;
}

}  // namespace diffpur
