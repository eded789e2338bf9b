#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "qmri/core/config.hpp"
#include "qmri/core/error.hpp"
#include "qmri/core/qar.hpp"
#include "qmri/core/rng.hpp"
#include "qmri/core/types.hpp"
#include "support/tmpdir.hpp"

using namespace qmri;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

template <class T>
Grid<T> random_grid(RngStream& rng) {
  const std::size_t nd = rng.uniform_int(1, 4);
  Dims d(nd);
  for (auto& x : d) x = rng.uniform_int(1, 5);
  Grid<T> g(d);
  for (auto& v : g.vec()) {
    if constexpr (std::is_floating_point_v<T>)
      v = static_cast<T>(rng.uniform(-1e3, 1e3));
    else
      v = T(static_cast<typename T::value_type>(rng.uniform(-1e3, 1e3)),
            static_cast<typename T::value_type>(rng.uniform(-1e3, 1e3)));
  }
  return g;
}

template <class T>
bool bitwise_equal(const Grid<T>& a, const Grid<T>& b) {
  return a.dims() == b.dims() && std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
}

}  // namespace

TEST_SUITE("core") {
  TEST_CASE("2x2 f64 identity is a 56-byte file and round-trips") {
    testing::TmpDir dir;
    RealGrid eye({2, 2}, {1.0, 0.0, 0.0, 1.0});
    write_real(dir / "eye.qar", eye);
    const std::string bytes = slurp(dir / "eye.qar");
    REQUIRE(bytes.size() == 56);
    CHECK(bytes.substr(0, 4) == "QAR1");
    CHECK(bytes[4] == 2);
    CHECK(bytes[5] == 2);
    CHECK(bytes[6] == 0);
    CHECK(bytes[7] == 0);
    std::uint64_t d0 = 0;
    std::memcpy(&d0, bytes.data() + 8, 8);
    CHECK(d0 == 2);
    double first = 0;
    std::memcpy(&first, bytes.data() + 24, 8);
    CHECK(first == 1.0);
    CHECK(read_real(dir / "eye.qar") == eye);
  }

  TEST_CASE("round trip is bitwise identity for every dtype") {
    testing::TmpDir dir;
    RngStream rng(1, 0);
    for (int trial = 0; trial < 25; ++trial) {
      auto check = [&](auto grid) {
        write_array(dir / "a.qar", grid);
        AnyGrid back = read_array(dir / "a.qar");
        using G = decltype(grid);
        REQUIRE(std::holds_alternative<G>(back));
        CHECK(bitwise_equal(std::get<G>(back), grid));
      };
      check(random_grid<float>(rng));
      check(random_grid<double>(rng));
      check(random_grid<std::complex<float>>(rng));
      check(random_grid<std::complex<double>>(rng));
    }
  }

  TEST_CASE("complex payload is interleaved re, im") {
    testing::TmpDir dir;
    ComplexGrid g({1}, {cplx(1.5, -2.5)});
    write_complex(dir / "c.qar", g);
    const std::string bytes = slurp(dir / "c.qar");
    REQUIRE(bytes.size() == 8 + 8 + 16);
    CHECK(bytes[4] == 4);
    double re = 0, im = 0;
    std::memcpy(&re, bytes.data() + 16, 8);
    std::memcpy(&im, bytes.data() + 24, 8);
    CHECK(re == 1.5);
    CHECK(im == -2.5);
  }

  TEST_CASE("header and payload errors") {
    testing::TmpDir dir;
    RealGrid g({2, 2}, {1.0, 2.0, 3.0, 4.0});
    write_real(dir / "ok.qar", g);
    const std::string good = slurp(dir / "ok.qar");

    std::string bad = good;
    bad[0] = 'X';
    spit(dir / "magic.qar", bad);
    try {
      read_array(dir / "magic.qar");
      FAIL("expected bad magic");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::io);
      CHECK(std::string(e.what()).find("magic") != std::string::npos);
    }

    bad = good;
    bad[4] = 9;
    spit(dir / "dtype.qar", bad);
    try {
      read_array(dir / "dtype.qar");
      FAIL("expected unknown dtype");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("dtype") != std::string::npos);
    }

    spit(dir / "short.qar", good.substr(0, good.size() - 3));
    try {
      read_array(dir / "short.qar");
      FAIL("expected truncation");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::io);
      CHECK(std::string(e.what()).find("truncated") != std::string::npos);
    }

    spit(dir / "long.qar", good + "x");
    CHECK_THROWS_AS(read_array(dir / "long.qar"), Error);
    CHECK_THROWS_AS(read_array(dir / "missing.qar"), Error);
  }

  TEST_CASE("unsupported shapes are rejected on write") {
    testing::TmpDir dir;
    CHECK_THROWS_AS(write_real(dir / "e.qar", RealGrid(Dims{})), Error);
    CHECK_THROWS_AS(write_real(dir / "5d.qar", RealGrid({1, 1, 1, 1, 2})), Error);
    RealGrid nan({1}, {std::nan("")});
    CHECK_THROWS_AS(write_real(dir / "nan.qar", nan), Error);
    CHECK_FALSE(fs::exists(dir / "e.qar"));
  }

  TEST_CASE("widening readers and masks") {
    testing::TmpDir dir;
    Grid<float> f({3}, {0.5f, -1.0f, 2.0f});
    write_array(dir / "f.qar", f);
    RealGrid r = read_real(dir / "f.qar");
    CHECK(r.vec() == std::vector<double>{0.5, -1.0, 2.0});
    ComplexGrid c = read_complex(dir / "f.qar");
    CHECK(c[2] == cplx(2.0, 0.0));
    CHECK_THROWS_AS(read_real(dir / "missing.qar"), Error);

    MaskGrid m({2, 3}, {1, 0, 1, 1, 0, 0});
    write_mask(dir / "m.qar", m);
    CHECK(dtype_of(read_array(dir / "m.qar")) == DType::f32);
    CHECK(read_mask(dir / "m.qar") == m);
  }

  TEST_CASE("atomic writes leave no temporaries") {
    testing::TmpDir dir;
    write_file_atomic(dir / "x.txt", "hello");
    write_file_atomic(dir / "x.txt", "world");
    CHECK(slurp(dir / "x.txt") == "world");
    std::size_t n = 0;
    for ([[maybe_unused]] auto& e : fs::directory_iterator(dir.path())) ++n;
    CHECK(n == 1);
  }

  TEST_CASE("equal (seed, stream) give equal first 10^4 draws") {
    RngStream a(123, 7), b(123, 7), c(123, 8), d(124, 7);
    bool same = true, diff_stream = false, diff_seed = false;
    for (int i = 0; i < 10000; ++i) {
      const std::uint64_t x = a.next_u64();
      same = same && x == b.next_u64();
      diff_stream = diff_stream || x != c.next_u64();
      diff_seed = diff_seed || x != d.next_u64();
    }
    CHECK(same);
    CHECK(diff_stream);
    CHECK(diff_seed);

    RngStream f1 = RngStream(5, 0).fork(3), f2 = RngStream(5, 0).fork(3), f3 = RngStream(5, 0).fork(4);
    const double u = f1.normal();
    CHECK(u == f2.normal());
    CHECK(u != f3.normal());
  }

  TEST_CASE("rng ranges") {
    RngStream r(9, 0);
    double lo = 1, hi = 0, mean = 0;
    for (int i = 0; i < 20000; ++i) {
      const double u = r.uniform();
      lo = std::min(lo, u);
      hi = std::max(hi, u);
      mean += u / 20000;
      const auto k = r.uniform_int(3, 5);
      REQUIRE(k >= 3);
      REQUIRE(k <= 5);
    }
    CHECK(lo >= 0.0);
    CHECK(hi < 1.0);
    CHECK(mean == doctest::Approx(0.5).epsilon(0.02));
  }

  TEST_CASE("MGREImage validation") {
    MGREImage x{ComplexGrid({2, 2, 2}), {0.004, 0.008}};
    CHECK_NOTHROW(x.validate());
    x.echo_times = {0.008, 0.004};
    CHECK_THROWS_AS(x.validate(), Error);
    x.echo_times = {0.0, 0.004};
    CHECK_THROWS_AS(x.validate(), Error);
    x.echo_times = {0.004};
    CHECK_THROWS_AS(x.validate(), Error);
    x.echo_times = {0.004, 0.008};
    x.data[3] = cplx(std::nan(""), 0.0);
    CHECK_THROWS_AS(x.validate(), Error);
    auto t = uniform_echo_times(3, 0.004, 0.004);
    CHECK(t[2] == doctest::Approx(0.012));
  }

  TEST_CASE("config parsing, typed getters and unknown keys") {
    Config c = Config::parse("# comment\n a = 3\nb=hello world  \nflag = true\nlist = 2, 4,8\nx = 1e-3\n");
    CHECK(c.get("a", 0LL) == 3);
    CHECK(c.get("b", "") == "hello world");
    CHECK(c.get("flag", false));
    CHECK(c.get_list("list", {}) == std::vector<long long>{2, 4, 8});
    CHECK(c.get("x", 0.0) == 1e-3);
    CHECK(c.get("missing", 2.5) == 2.5);
    CHECK_NOTHROW(c.reject_unknown());

    Config d = Config::parse("a = 1\ntypo = 2\n");
    (void)d.get("a", 0LL);
    try {
      d.reject_unknown();
      FAIL("expected unknown key");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::usage);
      CHECK(std::string(e.what()).find("typo") != std::string::npos);
    }
    CHECK_THROWS_AS(Config::parse("no equals sign\n"), Error);
    CHECK_THROWS_AS(Config::parse("a = notanumber\n").get("a", 0.0), Error);
    CHECK_THROWS_AS(Config::parse("a = 1\na = 2\n"), Error);
  }

  TEST_CASE("config writer output parses back to the same values") {
    ConfigWriter w;
    w.comment("defaults").put("lr", 1e-5).put("k", std::size_t{8}).put("on", true).put("rates", std::vector<long long>{2, 4});
    Config c = Config::parse(w.str());
    CHECK(c.get("lr", 0.0) == 1e-5);
    CHECK(c.get("k", std::size_t{0}) == 8);
    CHECK(c.get("on", false));
    CHECK(c.get_list("rates", {}) == std::vector<long long>{2, 4});
  }

  TEST_CASE("hash_hex") {
    // FNV-1a 64 reference values
    CHECK(hash_hex("") == "cbf29ce484222325");
    CHECK(hash_hex("a") == "af63dc4c8601ec8c");
    CHECK(hash_hex("a") != hash_hex("b"));
  }
}
