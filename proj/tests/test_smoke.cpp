// Compile-and-link sanity for the full public header surface.

#include <catch2/catch_amalgamated.hpp>

#include "lookahes/acquisition.hpp"
#include "lookahes/config.hpp"
#include "lookahes/core.hpp"
#include "lookahes/costs.hpp"
#include "lookahes/environments.hpp"
#include "lookahes/kernels.hpp"
#include "lookahes/parallel.hpp"
#include "lookahes/pathwise.hpp"
#include "lookahes/policy.hpp"
#include "lookahes/report.hpp"
#include "lookahes/rng.hpp"
#include "lookahes/runner.hpp"
#include "lookahes/selfcheck.hpp"
#include "lookahes/sobol.hpp"
#include "lookahes/surrogate.hpp"
#include "lookahes/tape.hpp"
#include "lookahes/version.hpp"

using namespace lookahes;

TEST_CASE("headers compile and basic objects construct", "[smoke]") {
  BoxDomain box = BoxDomain::cube(2, -1.0, 1.0);
  VectorXd mid = VectorXd::Zero(2);
  REQUIRE(normalize(box, mid)[0] == Catch::Approx(0.5));

  SeedStream s(1);
  REQUIRE(s.fork(2).uniform(0.0, 1.0) == s.fork(2).uniform(0.0, 1.0));

  CostModel cost = make_cost_model(CostKind::euclidean);
  VectorXd a = VectorXd::Zero(2), b = VectorXd::Ones(2);
  REQUIRE(markov_cost(cost, a, b) == Catch::Approx(std::sqrt(2.0)));

  ExperimentConfig cfg = parse_config("[env]\nname = \"ackley2\"\n");
  REQUIRE(cfg.env.name == "ackley2");
  REQUIRE(std::string(kVersion) == "1.0.0");
}
