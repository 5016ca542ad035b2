#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <string>

#include "mfh/config.hpp"
#include "mfh/errors.hpp"
#include "mfh/reference_models.hpp"

using namespace mfh;

namespace {

const std::string dir = MFH_CONFIG_DIR;

int parse_error_line(const std::string& text, std::string* key = nullptr) {
  try {
    parse_model(text);
  } catch (const ParseError& e) {
    if (key) *key = e.key();
    return e.line();
  }
  return -1;
}

}  // namespace

TEST_CASE("shipped model files reproduce the reference models") {
  const auto k2 = load_model_file(dir + "/kac_m2.yaml");
  const auto k3 = load_model_file(dir + "/kac_m3.yaml");
  const auto q = load_model_file(dir + "/quantum_m2.yaml");
  CHECK(k2.model.hash() == reference_kac_model(2).hash());
  CHECK(k3.model.hash() == reference_kac_model(3).hash());
  CHECK(q.model.hash() == reference_quantum_model().hash());
  REQUIRE(k3.initial);
  REQUIRE(q.initial);
  CHECK(trace_norm(*k3.initial - reference_kac_initial(3)) < 1e-15);
  CHECK(trace_norm(*q.initial - reference_quantum_initial()) < 1e-15);
  CHECK(k2.model.v_norm() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("shipped study files load and validate") {
  for (const char* f : {"study_kac_m2.yaml", "study_kac_m3.yaml", "study_quantum.yaml"}) {
    const StudyConfig c = load_study_file(dir + "/" + f);
    CHECK_NOTHROW(c.validate());
    CHECK_NOTHROW(load_model_file(c.model_path));
    CHECK(c.N_list.size() >= 3);
  }
  const StudyConfig c = load_study_file(dir + "/study_kac_m2.yaml");
  CHECK(c.path == NBodyPath::symmetric);
  CHECK(c.suite.N == 6);
  CHECK(c.expectations.size() >= 8);
}

TEST_CASE("parse errors carry line and key") {
  std::string key;
  CHECK(parse_error_line("backend: kac\nsite_dim: 2\nbogus: 1\n", &key) == 3);
  CHECK(key == "bogus");
  CHECK(parse_error_line("backend: kac\nsite_dim: two\n", &key) == 2);
  CHECK(key == "site_dim");
  CHECK(parse_error_line("backend: kac\nsite_dim: 2\ntransitions:\n  - {in: [0, 0], out: [0, 1]}\n", &key) == 4);
  CHECK(key == "transitions.rate");
  CHECK(parse_error_line("backend: spin\nsite_dim: 2\n", &key) == 1);
  CHECK(parse_error_line("site_dim: 2\n", &key) > 0);
  CHECK(key == "backend");
  CHECK_THROWS_AS(parse_study("N: [4, 6, 8]\n"), ParseError);
  CHECK_THROWS_AS(parse_study("model: a.yaml\nN: [4, 6, 8]\nmode: fastest\n"), ParseError);
}

TEST_CASE("inadmissible models are validation errors") {
  const std::string conflict =
      "backend: kac\nsite_dim: 2\nstrict: true\ntransitions:\n"
      "  - {in: [0, 1], out: [1, 1], rate: 0.3}\n"
      "  - {in: [1, 0], out: [1, 1], rate: 0.2}\n";
  CHECK_THROWS_AS(parse_model(conflict), ValidationError);
  std::string lenient = conflict;
  lenient.replace(lenient.find("strict: true"), 12, "strict: false");
  CHECK_NOTHROW(parse_model(lenient));

  CHECK_THROWS_AS(parse_model("backend: kac\nsite_dim: 2\ninitial: {weights: [0.7, 0.4]}\n"), Error);
  CHECK_THROWS_AS(parse_model("backend: quantum\nsite_dim: 2\nh1: [[1, 2], [3, 4]]\n"), ValidationError);
}

TEST_CASE("relative model path resolves against the study file") {
  const StudyConfig c = parse_study("model: m.yaml\nN: [4, 6, 8]\n", "/some/dir");
  CHECK(c.model_path == "/some/dir/m.yaml");
  const StudyConfig a = parse_study("model: /abs/m.yaml\nN: [4, 6, 8]\nj: [1]\nn: [0]\n", "/some/dir");
  CHECK(a.model_path == "/abs/m.yaml");
}
