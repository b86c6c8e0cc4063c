#include <doctest.h>

#include "nmk/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <unistd.h>

using namespace nmk;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("nmk_ckpt_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

ModelCheckpoint sample_checkpoint(std::uint64_t seed) {
  Rng rng(seed);
  ModelCheckpoint ckpt;
  ckpt.model = Mlp::init({3, 5, 2}, rng);
  ckpt.scheme = Scheme::neuralmark;
  ckpt.config_digest = "0123456789abcdef";
  return ckpt;
}

void write_bytes(const fs::path& p, const Bytes& b) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

}  // namespace

TEST_CASE("scheme names round-trip") {
  for (Scheme s : {Scheme::clean, Scheme::neuralmark, Scheme::vanilla})
    CHECK(scheme_from_string(to_string(s)) == s);
  CHECK_THROWS_AS(scheme_from_string("bogus"), ValidationError);
}

TEST_CASE("checkpoint bytes start with the magic and version") {
  ModelCheckpoint ckpt = sample_checkpoint(1);
  Bytes raw = checkpoint_bytes(ckpt);
  REQUIRE(raw.size() > 12);
  CHECK(std::memcmp(raw.data(), "NMK1", 4) == 0);
  std::uint32_t version;
  std::memcpy(&version, raw.data() + 4, 4);
  CHECK(version == 1);
  std::uint32_t tensors;
  std::memcpy(&tensors, raw.data() + 8, 4);
  CHECK(tensors == 4);  // W0, b0, W1, b1
}

TEST_CASE("save/load round-trips bit-exactly and deterministically") {
  TempDir tmp;
  ModelCheckpoint ckpt = sample_checkpoint(2);
  // Non-trivial values beyond init: exercise full binary64 round-trip.
  ckpt.model.weights[0](0, 0) = 0.1 + 0.2;
  ckpt.model.weights[1](1, 2) = -1e-300;

  fs::path p = tmp.path / "model.nmk";
  save_checkpoint(p, ckpt);
  ModelCheckpoint back = load_checkpoint(p);
  CHECK(back.scheme == ckpt.scheme);
  CHECK(back.config_digest == ckpt.config_digest);
  REQUIRE(back.model.layer_count() == ckpt.model.layer_count());
  for (Index l = 0; l < ckpt.model.layer_count(); ++l) {
    CHECK(back.model.weights[static_cast<std::size_t>(l)] ==
          ckpt.model.weights[static_cast<std::size_t>(l)]);
    CHECK(back.model.biases[static_cast<std::size_t>(l)] ==
          ckpt.model.biases[static_cast<std::size_t>(l)]);
  }

  // Deterministic writer: same checkpoint, same bytes.
  CHECK(checkpoint_bytes(back) == checkpoint_bytes(ckpt));
  fs::path q = tmp.path / "model2.nmk";
  save_checkpoint(q, ckpt);
  std::ifstream a(p, std::ios::binary), b(q, std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);
}

TEST_CASE("corrupt checkpoints fail as I/O errors, never as verdicts") {
  TempDir tmp;
  ModelCheckpoint ckpt = sample_checkpoint(3);
  Bytes raw = checkpoint_bytes(ckpt);

  SUBCASE("truncation at every structural boundary") {
    for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{8}, std::size_t{11},
                            std::size_t{16}, raw.size() / 2, raw.size() - 1}) {
      fs::path p = tmp.path / "cut.nmk";
      write_bytes(p, Bytes(raw.begin(), raw.begin() + static_cast<std::ptrdiff_t>(cut)));
      CHECK_THROWS_AS(load_checkpoint(p), IoError);
    }
  }

  SUBCASE("bad magic") {
    Bytes bad = raw;
    bad[0] = 'X';
    fs::path p = tmp.path / "magic.nmk";
    write_bytes(p, bad);
    CHECK_THROWS_AS(load_checkpoint(p), IoError);
  }

  SUBCASE("unsupported version") {
    Bytes bad = raw;
    bad[4] = 9;
    fs::path p = tmp.path / "ver.nmk";
    write_bytes(p, bad);
    CHECK_THROWS_AS(load_checkpoint(p), IoError);
  }

  SUBCASE("trailing garbage") {
    Bytes bad = raw;
    bad.push_back(0x00);
    fs::path p = tmp.path / "trail.nmk";
    write_bytes(p, bad);
    CHECK_THROWS_AS(load_checkpoint(p), IoError);
  }

  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_checkpoint(tmp.path / "nope.nmk"), IoError);
  }
}

TEST_CASE("checkpoint meta preserves scheme tags") {
  TempDir tmp;
  for (Scheme s : {Scheme::clean, Scheme::neuralmark, Scheme::vanilla}) {
    ModelCheckpoint ckpt = sample_checkpoint(4);
    ckpt.scheme = s;
    fs::path p = tmp.path / (to_string(s) + ".nmk");
    save_checkpoint(p, ckpt);
    CHECK(load_checkpoint(p).scheme == s);
  }
}
