#include <doctest.h>

#include <fstream>

#include "dualwalk/artifact.hpp"
#include "dualwalk/error.hpp"
#include "tmpdir.hpp"

using namespace dualwalk;
using namespace dualwalk::testing;

TEST_SUITE("artifact") {
  TEST_CASE("sha256 known answers") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    TempDir dir;
    const auto f = dir.write("x.txt", "abc");
    CHECK(sha256_file(f) == sha256_hex("abc"));
    CHECK_THROWS_AS(sha256_file(dir.path() / "none"), ArtifactError);
  }

  TEST_CASE("run directories are unique") {
    TempDir dir;
    const auto a = make_run_dir(dir.path(), "abcd1234");
    const auto b = make_run_dir(dir.path(), "abcd1234");
    CHECK(a != b);
    CHECK(std::filesystem::is_directory(a / "manifests"));
    CHECK(a.filename().string().find("abcd1234") != std::string::npos);
  }

  TEST_CASE("manifest round trip and input verification") {
    TempDir dir;
    const auto in = dir.write("in.txt", "one");
    const auto out = dir.write("out.txt", "two");
    Manifest m;
    m.stage = "train";
    m.seed = 42;
    m.config = {{"seed", "42"}};
    m.add_input("data", in);
    m.add_output("model", out);
    m.extra["note"] = 1;
    m.write(dir.path() / "m.json");
    const auto r = Manifest::read(dir.path() / "m.json");
    CHECK(r.stage == "train");
    CHECK(r.seed == 42);
    CHECK(r.inputs == m.inputs);
    CHECK(r.outputs == m.outputs);
    CHECK(r.extra == m.extra);
    CHECK_NOTHROW(r.verify_inputs());
    std::ofstream(in) << "changed";
    CHECK_THROWS_AS(r.verify_inputs(), ArtifactError);
    std::filesystem::remove(in);
    CHECK_THROWS_AS(r.verify_inputs(), ArtifactError);
    CHECK_THROWS_AS(Manifest::read(dir.path() / "nope.json"), ArtifactError);
    dir.write("bad.json", "{not json");
    CHECK_THROWS_AS(Manifest::read(dir.path() / "bad.json"), ArtifactError);
  }
}
