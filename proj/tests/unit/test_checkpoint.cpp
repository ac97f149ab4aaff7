#include <doctest.h>

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "mmf/checkpoint.hpp"
#include "mmf/error.hpp"
#include "mmf/imputer.hpp"
#include "mmf/rng.hpp"
#include "tmpdir.hpp"

using namespace mmf;

namespace {

std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    REQUIRE(out.good());
    out.write(bytes.data(), std::streamsize(bytes.size()));
}

Checkpoint sample_checkpoint() {
    Checkpoint ckpt;
    ckpt.config["alpha"] = "1";
    ckpt.set_f64("beta", 0.1 + 0.2);
    ckpt.set_u64("gamma", 123456789012345ULL);
    Tensor a({2, 3});
    for (std::size_t i = 0; i < a.numel(); ++i) a[i] = double(i) * 0.25 - 1.0;
    Tensor b({4});
    b[0] = -0.0;
    b[1] = 1e-300;
    b[2] = 1e300;
    b[3] = 0.1;
    ckpt.tensors.emplace_back("mat", a);
    ckpt.tensors.emplace_back("vec", b);
    return ckpt;
}

}  // namespace

TEST_CASE("checkpoint round trip preserves config and tensor bits") {
    support::TempDir dir;
    auto path = dir.file("model.ckpt");
    Checkpoint ckpt = sample_checkpoint();
    save_checkpoint(ckpt, path);

    Checkpoint back = load_checkpoint(path);
    CHECK(back.version == ckpt.version);
    CHECK(back.config == ckpt.config);
    REQUIRE(back.tensors.size() == ckpt.tensors.size());
    for (std::size_t t = 0; t < ckpt.tensors.size(); ++t) {
        CHECK(back.tensors[t].first == ckpt.tensors[t].first);
        const Tensor& x = ckpt.tensors[t].second;
        const Tensor& y = back.tensors[t].second;
        REQUIRE(x.same_shape(y));
        for (std::size_t i = 0; i < x.numel(); ++i) {
            std::uint64_t xb, yb;
            static_assert(sizeof(double) == sizeof(std::uint64_t));
            const double xv = x[i], yv = y[i];
            std::memcpy(&xb, &xv, 8);
            std::memcpy(&yb, &yv, 8);
            CHECK(xb == yb);
        }
    }
}

TEST_CASE("checkpoint save is byte-for-byte deterministic") {
    support::TempDir dir;
    Checkpoint ckpt = sample_checkpoint();
    auto p1 = dir.file("a.ckpt");
    auto p2 = dir.file("b.ckpt");
    save_checkpoint(ckpt, p1);
    save_checkpoint(ckpt, p2);
    CHECK(read_bytes(p1) == read_bytes(p2));
}

TEST_CASE("checkpoint f64 config values round trip exactly") {
    Checkpoint ckpt;
    const double vals[] = {0.1, -1e-17, 3.141592653589793, 1e308, -0.0};
    for (std::size_t i = 0; i < 5; ++i) ckpt.set_f64("k" + std::to_string(i), vals[i]);
    support::TempDir dir;
    auto path = dir.file("cfg.ckpt");
    save_checkpoint(ckpt, path);
    Checkpoint back = load_checkpoint(path);
    for (std::size_t i = 0; i < 5; ++i) {
        double v = back.get_f64("k" + std::to_string(i));
        std::uint64_t a, b;
        std::memcpy(&a, &v, 8);
        std::memcpy(&b, &vals[i], 8);
        CHECK(a == b);
    }
}

TEST_CASE("checkpoint rejects corrupted magic") {
    support::TempDir dir;
    auto path = dir.file("bad.ckpt");
    save_checkpoint(sample_checkpoint(), path);
    std::string bytes = read_bytes(path);
    bytes[0] = 'X';
    // Re-stamp the trailing checksum so the magic check itself is what fires.
    const auto body = bytes.size() - 4;
    std::uint32_t crc = std::uint32_t(
        ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), uInt(body)));
    for (int i = 0; i < 4; ++i) bytes[body + i] = char((crc >> (8 * i)) & 0xff);
    write_bytes(path, bytes);
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("magic"), Error);
}

TEST_CASE("checkpoint rejects payload corruption via checksum") {
    support::TempDir dir;
    auto path = dir.file("bad.ckpt");
    save_checkpoint(sample_checkpoint(), path);
    std::string bytes = read_bytes(path);
    bytes[bytes.size() / 2] ^= char(0x40);
    write_bytes(path, bytes);
    CHECK_THROWS_AS(load_checkpoint(path), Error);
}

TEST_CASE("checkpoint rejects truncation") {
    support::TempDir dir;
    auto path = dir.file("bad.ckpt");
    save_checkpoint(sample_checkpoint(), path);
    std::string bytes = read_bytes(path);
    write_bytes(path, bytes.substr(0, bytes.size() - 9));
    CHECK_THROWS_AS(load_checkpoint(path), Error);
}

TEST_CASE("checkpoint load of missing file is an io error") {
    support::TempDir dir;
    try {
        load_checkpoint(dir.file("nope.ckpt"));
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::io);
    }
}

TEST_CASE("model params survive a checkpoint round trip") {
    ModelDims dims;
    dims.channels = 4;
    dims.ff_hidden = 5;
    dims.factors = 3;
    RngStream rng(7);
    ModelParams params = make_model_params(dims, rng);
    Checkpoint ckpt = checkpoint_from_params(params, 3.5, 1.25);
    CHECK(ckpt.get_f64("data.norm_mean") == 3.5);
    CHECK(ckpt.get_f64("data.norm_std") == 1.25);

    support::TempDir dir;
    auto path = dir.file("m.ckpt");
    save_checkpoint(ckpt, path);
    ModelParams back = params_from_checkpoint(load_checkpoint(path));

    auto a = params.named_parameters();
    auto b = back.named_parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].first == b[i].first);
        REQUIRE(a[i].second->value.same_shape(b[i].second->value));
        for (std::size_t j = 0; j < a[i].second->value.numel(); ++j) {
            CHECK(a[i].second->value[j] == b[i].second->value[j]);
        }
    }
}

TEST_CASE("params_from_checkpoint rejects missing tensors") {
    ModelDims dims;
    dims.channels = 3;
    dims.ff_hidden = 3;
    dims.factors = 2;
    RngStream rng(1);
    Checkpoint ckpt = checkpoint_from_params(make_model_params(dims, rng), 0.0, 1.0);
    ckpt.tensors.pop_back();
    try {
        params_from_checkpoint(ckpt);
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::format);
    }
}

TEST_CASE("params_from_checkpoint rejects shape mismatches") {
    ModelDims dims;
    dims.channels = 3;
    dims.ff_hidden = 3;
    dims.factors = 2;
    RngStream rng(1);
    Checkpoint ckpt = checkpoint_from_params(make_model_params(dims, rng), 0.0, 1.0);
    ckpt.tensors[0].second = Tensor({9, 9});
    CHECK_THROWS_AS(params_from_checkpoint(ckpt), Error);
}
