#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>

#include "qmri/cli/cli.hpp"
#include "qmri/core/qar.hpp"
#include "support/tmpdir.hpp"

using namespace qmri;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome qmri_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Minimal binary PGM reader, independent of the encoder.
struct Pgm {
  std::size_t w = 0, h = 0, maxval = 0;
  std::vector<unsigned char> px;
};

Pgm read_pgm(const std::string& bytes) {
  std::istringstream in(bytes);
  std::string magic;
  Pgm p;
  in >> magic >> p.w >> p.h >> p.maxval;
  REQUIRE(magic == "P5");
  in.get();
  p.px.resize(p.w * p.h);
  in.read(reinterpret_cast<char*>(p.px.data()), static_cast<std::streamsize>(p.px.size()));
  REQUIRE(static_cast<std::size_t>(in.gcount()) == p.px.size());
  return p;
}

class ScopedEnv {
 public:
  ScopedEnv(const char* name, const char* value) : name_(name) {
    if (const char* old = std::getenv(name)) old_ = old;
    ::setenv(name, value, 1);
  }
  ~ScopedEnv() {
    if (old_)
      ::setenv(name_, old_->c_str(), 1);
    else
      ::unsetenv(name_);
  }

 private:
  const char* name_;
  std::optional<std::string> old_;
};

std::vector<std::string> phantom_args(const fs::path& out) {
  return {"phantom", "--out", out.string(), "--height", "32", "--width", "32", "--coils", "4"};
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("usage errors exit with 2") {
    testing::TmpDir t;
    Outcome r = qmri_run({"reconstruct", "--in", t.path().string(), "--out", (t / "o").string(), "--method", "magic"});
    CHECK(r.code == cli::kUsage);
    for (const char* m : {"zf", "tv", "red", "du", "correct"}) CHECK(r.err.find(m) != std::string::npos);
    CHECK(r.err.rfind("qmri: error[usage]:", 0) == 0);
    CHECK(qmri_run({"phantom", "--no-such-flag"}).code == cli::kUsage);
    CHECK(qmri_run({}).code == cli::kUsage);
    CHECK(qmri_run({"bogus"}).code == cli::kUsage);
    CHECK(qmri_run({"simulate", "--out", (t / "s").string()}).code == cli::kUsage);
  }

  TEST_CASE("missing inputs exit with 3") {
    testing::TmpDir t;
    Outcome r = qmri_run({"fit", "--in", (t / "nothing.qar").string(), "--out", (t / "o").string()});
    CHECK(r.code == cli::kIo);
    CHECK(r.err.find("error[io]") != std::string::npos);
    CHECK(qmri_run({"simulate", "--in", (t / "absent").string(), "--out", (t / "o").string()}).code == cli::kIo);
    CHECK(qmri_run({"replay", "--provenance", (t / "p.json").string()}).code == cli::kIo);
  }

  TEST_CASE("version and dump-config") {
    Outcome v = qmri_run({"--version"});
    CHECK(v.code == 0);
    CHECK(v.out.find(cli::kVersion) != std::string::npos);
    Outcome d = qmri_run({"train", "--dump-config"});
    CHECK(d.code == 0);
    CHECK(d.out.find("train.mode") != std::string::npos);
    CHECK(d.out.find("seed") != std::string::npos);
    // the dump is itself a valid config
    testing::TmpDir t;
    std::ofstream(t / "c.txt") << d.out;
    Outcome again = qmri_run({"train", "--dump-config", "--config", (t / "c.txt").string()});
    CHECK(again.code == 0);
    std::ofstream(t / "bad.txt") << "no.such.key = 1\n";
    Outcome bad = qmri_run({"phantom", "--config", (t / "bad.txt").string(), "--out", (t / "p").string()});
    CHECK(bad.code == cli::kUsage);
  }

  TEST_CASE("eval of a reference against itself") {
    testing::TmpDir t;
    RealGrid ref({16, 16});
    for (std::size_t i = 0; i < ref.size(); ++i) ref[i] = std::sin(0.1 * static_cast<double>(i)) + 2.0;
    write_real(t / "ref.qar", ref);
    RealGrid off = ref;
    off[5] += 0.5;
    write_real(t / "off.qar", off);
    Outcome r = qmri_run({"eval", "--ref", (t / "ref.qar").string(), "--est", (t / "ref.qar").string(), "--est",
                          (t / "off.qar").string(), "--label", "same", "--label", "off", "--rate", "4",
                          "--out", (t / "table.tsv").string()});
    REQUIRE(r.code == 0);
    std::istringstream lines(r.out);
    std::string header, same, other;
    std::getline(lines, header);
    std::getline(lines, same);
    std::getline(lines, other);
    CHECK(header == "method\trate\tsnr_db\tssim");
    CHECK(same == "same\t4\t300.000000\t1.000000");
    CHECK(other.rfind("off\t4\t", 0) == 0);
    CHECK(slurp(t / "table.tsv") == r.out);
    CHECK(fs::exists(t.path() / "table.tsv.provenance.json"));

    write_real(t / "small.qar", RealGrid({8, 8}));
    CHECK(qmri_run({"eval", "--ref", (t / "ref.qar").string(), "--est", (t / "small.qar").string()}).code == cli::kIo);
  }

  TEST_CASE("pgm export") {
    testing::TmpDir t;
    write_real(t / "const.qar", RealGrid({4, 6}, 3.0));
    REQUIRE(qmri_run({"export-pgm", "--in", (t / "const.qar").string(), "--out", (t / "c.pgm").string(),
                      "--window", "0,3"}).code == 0);
    Pgm c = read_pgm(slurp(t / "c.pgm"));
    CHECK(c.w == 6);
    CHECK(c.h == 4);
    CHECK(c.maxval == 255);
    for (auto v : c.px) CHECK(v == 255);

    REQUIRE(qmri_run({"export-pgm", "--in", (t / "const.qar").string(), "--out", (t / "lo.pgm").string(),
                      "--window", "5,10"}).code == 0);
    for (auto v : read_pgm(slurp(t / "lo.pgm")).px) CHECK(v == 0);

    RealGrid ramp({8, 32});
    for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = 0.25 + static_cast<double>(i) / 255.0 * 1.5;
    write_real(t / "ramp.qar", ramp);
    REQUIRE(qmri_run({"export-pgm", "--in", (t / "ramp.qar").string(), "--out", (t / "r.pgm").string(),
                      "--window", "0.25,1.75"}).code == 0);
    Pgm r = read_pgm(slurp(t / "r.pgm"));
    REQUIRE(r.px.size() == ramp.size());
    for (std::size_t i = 0; i < ramp.size(); ++i) {
      const double back = 0.25 + r.px[i] / 255.0 * 1.5;
      CHECK(std::abs(back - ramp[i]) <= 1.5 / 255.0);
    }

    write_real(t / "stack.qar", RealGrid({3, 4, 4}, 1.0));
    CHECK(qmri_run({"export-pgm", "--in", (t / "stack.qar").string(), "--out", (t / "s.pgm").string()}).code ==
          cli::kUsage);
    CHECK(qmri_run({"export-pgm", "--in", (t / "stack.qar").string(), "--out", (t / "s.pgm").string(), "--slice",
                    "1"}).code == 0);
    write_complex(t / "z.qar", ComplexGrid({4, 4}));
    CHECK(qmri_run({"export-pgm", "--in", (t / "z.qar").string(), "--out", (t / "z.pgm").string()}).code ==
          cli::kUsage);
  }

  TEST_CASE("encode_pgm directly") {
    std::string s = cli::encode_pgm({-1.0, 0.0, 0.5, 1.0, 2.0, std::nan("")}, 2, 3, 0.0, 1.0);
    Pgm p = read_pgm(s);
    CHECK(p.px == std::vector<unsigned char>{0, 0, 128, 255, 255, 0});
  }

  TEST_CASE("phantom, simulate, reconstruct, fit") {
    testing::TmpDir t;
    REQUIRE(qmri_run(phantom_args(t / "ph")).code == 0);
    Outcome sim = qmri_run({"simulate", "--in", (t / "ph").string(), "--out", (t / "meas").string(), "--accel", "4",
                            "--motion", "default", "--central-cap", "6", "--seed", "3"});
    REQUIRE_MESSAGE(sim.code == 0, sim.err);
    CHECK(fs::exists(t.path() / "meas" / "motion.txt"));
    Outcome rec = qmri_run({"reconstruct", "--in", (t / "meas").string(), "--out", (t / "zf").string(), "--method",
                            "zf"});
    REQUIRE_MESSAGE(rec.code == 0, rec.err);
    Outcome fit = qmri_run({"fit", "--in", (t / "zf").string(), "--out", (t / "fit").string(), "--phantom",
                            (t / "ph").string()});
    REQUIRE_MESSAGE(fit.code == 0, fit.err);
    RealGrid r2s = read_real(t / "fit" / "r2s.qar");
    MaskGrid rem = read_mask(t / "ph" / "rem.qar");
    REQUIRE(r2s.dims() == rem.dims());
    std::size_t nonzero = 0, inside = 0;
    for (std::size_t i = 0; i < rem.size(); ++i) {
      if (!rem[i]) {
        CHECK(r2s[i] == 0.0);
        continue;
      }
      ++inside;
      nonzero += r2s[i] != 0.0;
    }
    CHECK(nonzero > inside / 2);
    Outcome ev = qmri_run({"eval", "--ref", (t / "ph" / "image.qar").string(), "--est", (t / "zf" / "image.qar").string()});
    CHECK(ev.code == 0);
    CHECK(ev.out.find("zf\t-\t") != std::string::npos);
  }

  TEST_CASE("replay is bit-identical") {
    testing::TmpDir t;
    REQUIRE(qmri_run(phantom_args(t / "ph")).code == 0);
    REQUIRE(qmri_run({"simulate", "--in", (t / "ph").string(), "--out", (t / "m1").string(), "--motion", "default",
                      "--central-cap", "6", "--seed", "11"}).code == 0);
    Outcome rp = qmri_run({"replay", "--provenance", (t / "m1" / "provenance.json").string(), "--out",
                           (t / "m2").string()});
    REQUIRE_MESSAGE(rp.code == 0, rp.err);
    for (const char* f : {"kspace.qar", "mask.qar", "coils.qar", "echo_times.qar", "motion.txt", "measurement.txt"})
      CHECK_MESSAGE(slurp(t.path() / "m1" / f) == slurp(t.path() / "m2" / f), f);

    REQUIRE(qmri_run({"replay", "--provenance", (t / "ph" / "provenance.json").string(), "--out",
                      (t / "ph2").string()}).code == 0);
    for (const char* f : {"image.qar", "r2s.qar", "rem.qar", "coils.qar", "config.txt"})
      CHECK_MESSAGE(slurp(t.path() / "ph" / f) == slurp(t.path() / "ph2" / f), f);

    // a changed input is refused
    std::ofstream(t / "ph" / "coils.qar", std::ios::app) << "x";
    CHECK(qmri_run({"replay", "--provenance", (t / "m1" / "provenance.json").string(), "--out",
                    (t / "m3").string()}).code == cli::kIo);
  }

  TEST_CASE("QMRI_SEED sets the seed when --seed is absent") {
    testing::TmpDir t;
    REQUIRE(qmri_run({"phantom", "--out", (t / "a").string(), "--height", "16", "--width", "16", "--seed", "7"})
                .code == 0);
    {
      ScopedEnv env("QMRI_SEED", "7");
      REQUIRE(qmri_run({"phantom", "--out", (t / "b").string(), "--height", "16", "--width", "16"}).code == 0);
      REQUIRE(qmri_run({"phantom", "--out", (t / "c").string(), "--height", "16", "--width", "16", "--seed", "8"})
                  .code == 0);
    }
    CHECK(slurp(t.path() / "a" / "image.qar") == slurp(t.path() / "b" / "image.qar"));
    CHECK(slurp(t.path() / "a" / "image.qar") != slurp(t.path() / "c" / "image.qar"));
    ScopedEnv bad("QMRI_SEED", "seven");
    CHECK(qmri_run({"phantom", "--out", (t / "d").string(), "--height", "16", "--width", "16"}).code == cli::kUsage);
  }
}
