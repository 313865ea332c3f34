#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "diffpur/classifier.hpp"
#include "diffpur/errors.hpp"
#include "diffpur/tensor.hpp"
#include "diffpur/tensor_io.hpp"
#include "doctest.h"

using namespace diffpur;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("diffpur_io_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::string str(const std::string& name = "") const {
        return name.empty() ? path.string() : (path / name).string();
    }
};

}  // namespace

TEST_CASE("tensor round-trips bit-exactly through the container format") {
    TempDir tmp;
    RandomSource rng(31);
    Tensor t = gaussian_like({3, 4, 2}, rng);
    t[0] = 0.0;
    t[1] = -0.0;
    t[2] = 1e-300;
    t[3] = -1234.5678901234567;
    save_tensor(tmp.str("t"), t);
    Tensor back = load_tensor(tmp.str("t"));
    REQUIRE(back.same_shape(t));
    for (int i = 0; i < t.size(); ++i) {
        CHECK(back[i] == t[i]);
        CHECK(std::signbit(back[i]) == std::signbit(t[i]));
    }
}

TEST_CASE("tensor sidecar is the documented json shape") {
    TempDir tmp;
    save_tensor(tmp.str("t"), Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
    std::ifstream in(tmp.str("t") + ".json");
    std::string sidecar((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
    CHECK(sidecar.find("\"dtype\": \"f64\"") != std::string::npos);
    CHECK(sidecar.find("\"order\": \"row-major\"") != std::string::npos);
    CHECK(sidecar.find("\"shape\"") != std::string::npos);
    // 6 doubles -> exactly 48 bytes of payload
    CHECK(fs::file_size(tmp.str("t") + ".bin") == 48);
}

TEST_CASE("tensor load failures raise io errors") {
    TempDir tmp;
    CHECK_THROWS_AS(load_tensor(tmp.str("missing")), IoError);
    save_tensor(tmp.str("t"), Tensor({4}, {1, 2, 3, 4}));
    // Truncate the payload behind the sidecar's back.
    std::ofstream(tmp.str("t") + ".bin", std::ios::binary).write("xy", 2);
    CHECK_THROWS_AS(load_tensor(tmp.str("t")), IoError);
}

TEST_CASE("stack and unstack invert each other") {
    RandomSource rng(32);
    std::vector<Tensor> items;
    for (int i = 0; i < 5; ++i) items.push_back(gaussian_like({2, 3}, rng));
    Tensor stacked = stack_tensors(items);
    CHECK(stacked.shape() == std::vector<int>({5, 2, 3}));
    std::vector<Tensor> back = unstack_tensor(stacked);
    REQUIRE(back.size() == items.size());
    for (std::size_t n = 0; n < items.size(); ++n)
        for (int i = 0; i < items[n].size(); ++i) CHECK(back[n][i] == items[n][i]);
    CHECK_THROWS_AS(stack_tensors({}), ShapeError);
    CHECK_THROWS_AS(stack_tensors({Tensor({2}), Tensor({3})}), ShapeError);
    CHECK_THROWS_AS(unstack_tensor(Tensor({4})), ShapeError);
}

TEST_CASE("classifier save/load preserves both families exactly") {
    TempDir tmp;
    RandomSource rng(33);

    Classifier lin = make_softmax_linear(6, 3, 0.2, rng);
    save_classifier(tmp.str("lin"), lin);
    Classifier lin2 = load_classifier(tmp.str("lin"));
    const auto& a = std::get<SoftmaxLinear>(lin);
    const auto& b = std::get<SoftmaxLinear>(lin2);
    CHECK(a.W == b.W);
    CHECK(a.b == b.b);

    Classifier mlp = make_mlp1(6, 5, 3, 0.2, rng);
    save_classifier(tmp.str("mlp"), mlp);
    Classifier mlp2 = load_classifier(tmp.str("mlp"));
    const auto& c = std::get<Mlp1>(mlp);
    const auto& d = std::get<Mlp1>(mlp2);
    CHECK(c.W1 == d.W1);
    CHECK(c.b1 == d.b1);
    CHECK(c.W2 == d.W2);
    CHECK(c.b2 == d.b2);

    // Same predictions on a probe input.
    Tensor x = gaussian_like({6}, rng);
    CHECK(predict(mlp, x) == predict(mlp2, x));
    CHECK_THROWS_AS(load_classifier(tmp.str("nope")), IoError);
}

TEST_CASE("dataset save/load preserves images, labels, and the mixture") {
    TempDir tmp;
    RandomSource rng(34);
    GeneratedData g = make_gmm_image_dataset(3, 4, 4, 1, 7, 0.1, 0.01, rng);
    save_dataset(tmp.str("data"), g);
    GeneratedData back = load_dataset(tmp.str("data"));
    CHECK(back.data.labels == g.data.labels);
    CHECK(back.data.meta.num_classes == 3);
    CHECK(back.data.meta.per_class == 7);
    CHECK(back.data.meta.seed == g.data.meta.seed);
    REQUIRE(back.data.images.size() == g.data.images.size());
    for (std::size_t n = 0; n < g.data.images.size(); ++n)
        for (int i = 0; i < g.data.images[n].size(); ++i)
            CHECK(back.data.images[n][i] == g.data.images[n][i]);
    CHECK(back.mixture.weights == g.mixture.weights);
    CHECK(back.mixture.var == g.mixture.var);
    REQUIRE(back.mixture.means.size() == g.mixture.means.size());
    for (std::size_t k = 0; k < g.mixture.means.size(); ++k)
        for (int i = 0; i < g.mixture.means[k].size(); ++i)
            CHECK(back.mixture.means[k][i] == g.mixture.means[k][i]);
}
