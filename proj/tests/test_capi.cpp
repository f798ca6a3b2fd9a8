#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "ndrshkf.h"

TEST_CASE("version and status names") {
  CHECK(std::strlen(ndr_version()) > 0);
  CHECK(std::string(ndr_status_name(NDR_OK)) == "ok");
  CHECK(std::string(ndr_status_name(NDR_ERR_NOT_SPD)) == "not-positive-definite");
}

TEST_CASE("model handles") {
  ndr_model* m = nullptr;
  REQUIRE(ndr_model_create_lorenz(0.01, &m) == NDR_OK);
  int n_x = 0, n_z = 0;
  CHECK(ndr_model_dims(m, &n_x, &n_z) == NDR_OK);
  CHECK(n_x == 3);
  CHECK(n_z == 2);
  ndr_model_destroy(m);

  ndr_model* uav = nullptr;
  REQUIRE(ndr_model_create_uav(1, &uav) == NDR_OK);
  CHECK(ndr_model_dims(uav, &n_x, &n_z) == NDR_OK);
  CHECK(n_x == 19);
  CHECK(n_z == 6);
  ndr_model_destroy(uav);

  CHECK(ndr_model_create_lorenz(-1.0, &m) == NDR_ERR_INVALID_ARG);
  CHECK(std::strlen(ndr_last_error()) > 0);
}

TEST_CASE("filter lifecycle over the c api") {
  ndr_model* m = nullptr;
  REQUIRE(ndr_model_create_lorenz(0.01, &m) == NDR_OK);

  ndr_policy* p = nullptr;
  REQUIRE(ndr_policy_create(R"({"depth": 3})", 7, &p) == NDR_OK);
  long long params = 0;
  CHECK(ndr_policy_num_params(p, &params) == NDR_OK);
  CHECK(params > 10000);

  ndr_filter* ekf = nullptr;
  ndr_filter* shkf = nullptr;
  ndr_filter* ndr = nullptr;
  REQUIRE(ndr_filter_create(m, R"({"kind": "ekf"})", nullptr, &ekf) == NDR_OK);
  REQUIRE(ndr_filter_create(m, R"({"kind": "shkf", "b": 0.95})", nullptr, &shkf) == NDR_OK);
  REQUIRE(ndr_filter_create(m, R"({"kind": "ndr"})", p, &ndr) == NDR_OK);

  double x0[3] = {1.0, 1.0, 25.0};
  double p0[3] = {1.0, 1.0, 1.0};
  double q0[3] = {0.01, 0.01, 0.01};
  double r0[2] = {1.0, 2.0};
  for (ndr_filter* f : {ekf, shkf, ndr}) REQUIRE(ndr_filter_init(f, x0, p0, q0, r0) == NDR_OK);

  // stepping before init is rejected
  ndr_filter* cold = nullptr;
  REQUIRE(ndr_filter_create(m, R"({"kind": "ekf"})", nullptr, &cold) == NDR_OK);
  double z[2] = {1.0, 25.0};
  CHECK(ndr_filter_step(cold, z, nullptr, 0.01) == NDR_ERR_INVALID_ARG);
  ndr_filter_destroy(cold);

  for (int k = 0; k < 50; ++k) {
    double zk[2] = {1.0 + 0.05 * k, 25.0 - 0.02 * k};
    for (ndr_filter* f : {ekf, shkf, ndr}) REQUIRE(ndr_filter_step(f, zk, nullptr, 0.01) == NDR_OK);
  }
  double x[3], pd[3], qd[3], rd[2];
  for (ndr_filter* f : {ekf, shkf, ndr}) {
    REQUIRE(ndr_filter_state(f, x, pd, qd, rd) == NDR_OK);
    for (double v : x) CHECK(std::isfinite(v));
    for (int i = 0; i < 3; ++i) {
      CHECK(qd[i] >= 0.01 / 100.0);
      CHECK(qd[i] <= 0.01 * 100.0);
    }
  }

  ndr_filter_destroy(ekf);
  ndr_filter_destroy(shkf);
  ndr_filter_destroy(ndr);
  ndr_policy_destroy(p);
  ndr_model_destroy(m);
}

TEST_CASE("policy save and load through the api") {
  ndr_policy* p = nullptr;
  REQUIRE(ndr_policy_create(R"({"n_x": 19, "n_z": 6, "d_pi": 32})", 3, &p) == NDR_OK);
  REQUIRE(ndr_policy_save(p, "/tmp/ndr_capi_ckpt.json") == NDR_OK);
  ndr_policy* q = nullptr;
  REQUIRE(ndr_policy_load("/tmp/ndr_capi_ckpt.json", &q) == NDR_OK);
  long long a = 0, b = 0;
  ndr_policy_num_params(p, &a);
  ndr_policy_num_params(q, &b);
  CHECK(a == b);
  ndr_policy_destroy(p);
  ndr_policy_destroy(q);

  ndr_policy* missing = nullptr;
  CHECK(ndr_policy_load("/tmp/definitely_not_there.json", &missing) == NDR_ERR_IO);
}

TEST_CASE("mismatched policy dims are rejected") {
  ndr_model* m = nullptr;
  REQUIRE(ndr_model_create_lorenz(0.01, &m) == NDR_OK);
  ndr_policy* p = nullptr;
  REQUIRE(ndr_policy_create(R"({"n_x": 19, "n_z": 6})", 3, &p) == NDR_OK);
  ndr_filter* f = nullptr;
  CHECK(ndr_filter_create(m, R"({"kind": "ndr"})", p, &f) == NDR_ERR_SHAPE);
  ndr_policy_destroy(p);
  ndr_model_destroy(m);
}

TEST_CASE("command driver exposed via the c api") {
  char* summary = nullptr;
  std::string cfg = R"({"system": "rossler", "steps": 15, "seed": 2, "out": "/tmp/ndr_capi_traj.csv"})";
  REQUIRE(ndr_cmd_simulate(cfg.c_str(), nullptr, &summary) == NDR_OK);
  REQUIRE(summary != nullptr);
  CHECK(std::string(summary).find("steps") != std::string::npos);
  ndr_string_free(summary);

  CHECK(ndr_cmd_simulate(R"({"nonsense": 1})", nullptr, nullptr) == NDR_ERR_CONFIG);

  char* preset = nullptr;
  REQUIRE(ndr_preset("uav-bench", &preset) == NDR_OK);
  CHECK(std::string(preset).find("sensor-denied") != std::string::npos);
  ndr_string_free(preset);
  CHECK(ndr_preset("bogus", &preset) == NDR_ERR_CONFIG);
}
