#include <catch2/catch_amalgamated.hpp>

#include <vector>

#include "mvt/verify.hpp"

using namespace mvt;

namespace {

MobileViTBlockSpec tiny_block_spec(int patch, int kernel = 3, bool skip = true) {
  MobileViTBlockSpec s;
  s.channels = 8;
  s.dim = 16;
  s.depth = 1;
  s.heads = 2;
  s.kernel = kernel;
  s.patch_h = s.patch_w = patch;
  s.skip = skip;
  return s;
}

}  // namespace

TEST_CASE("plain 3x3 conv control covers exactly 9/64 at the center", "[verify]") {
  FieldProbeReport r = probe_plain_conv(8, 3, 8, 8, 4, 4);
  REQUIRE(r.coverage == Catch::Approx(9.0 / 64.0));
  // The mask is exactly the 3x3 window around (4,4).
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      bool in_window = y >= 3 && y <= 5 && x >= 3 && x <= 5;
      REQUIRE(static_cast<bool>(r.mask[static_cast<size_t>(y * 8 + x)]) == in_window);
    }
}

TEST_CASE("h=w=2 <= n=3 gives full coverage on 8x8 and 16x16", "[verify]") {
  for (int size : {8, 16}) {
    FieldProbeReport corner = probe_mobilevit_block(tiny_block_spec(2), size, size, 0, 0);
    REQUIRE(corner.coverage == 1.0);
    FieldProbeReport center =
        probe_mobilevit_block(tiny_block_spec(2), size, size, size / 2, size / 2);
    REQUIRE(center.coverage == 1.0);
  }
}

TEST_CASE("h=w=4 > n=3 leaves boundary probes with incomplete support", "[verify]") {
  FieldProbeReport r4 = probe_mobilevit_block(tiny_block_spec(4), 8, 8, 0, 0);
  REQUIRE(r4.coverage < 1.0);
  // Coverage monotonicity at the same coordinate: full at h=2, partial at h=4.
  FieldProbeReport r2 = probe_mobilevit_block(tiny_block_spec(2), 8, 8, 0, 0);
  REQUIRE(r2.coverage == 1.0);
  REQUIRE(r2.coverage > r4.coverage);
}

TEST_CASE("probes are deterministic given seeds", "[verify]") {
  FieldProbeReport a = probe_mobilevit_block(tiny_block_spec(4), 8, 8, 0, 0, 3, 42);
  FieldProbeReport b = probe_mobilevit_block(tiny_block_spec(4), 8, 8, 0, 0, 3, 42);
  REQUIRE(a.mask == b.mask);
  REQUIRE(a.coverage == b.coverage);
}

TEST_CASE("probe rejects out-of-bounds coordinates", "[verify]") {
  REQUIRE_THROWS_WITH(probe_plain_conv(4, 3, 8, 8, 8, 0),
                      Catch::Matchers::ContainsSubstring("outside"));
}

TEST_CASE("a lone transformer reaches exactly the shared intra-patch positions", "[verify]") {
  // With 1x1 convs the only cross-pixel path is the transformer over the
  // patch axis, so the support of output pixel (y0,x0) must be exactly
  // the pixels sharing its intra-patch position.
  const int hw = 4;
  PatchGrid grid(2, 2, hw, hw);
  for (auto [y0, x0] : std::vector<std::pair<int, int>>{{0, 0}, {1, 2}, {3, 3}}) {
    FieldProbeReport r = probe_mobilevit_block(tiny_block_spec(2, /*kernel=*/1, /*skip=*/false),
                                               hw, hw, y0, x0, 3, 91);
    auto [n0, p0] = grid.patch_of(y0, x0);
    (void)n0;
    // Brute-force oracle from the grid bijection.
    std::vector<uint8_t> expect(hw * hw, 0);
    for (int y = 0; y < hw; ++y)
      for (int x = 0; x < hw; ++x) {
        auto [n, p] = grid.patch_of(y, x);
        (void)n;
        if (p == p0) expect[static_cast<size_t>(y * hw + x)] = 1;
      }
    REQUIRE(r.mask == expect);
    REQUIRE(r.coverage == Catch::Approx(4.0 / 16.0));
  }
}

TEST_CASE("suite registry exposes exactly the five documented suites", "[verify]") {
  REQUIRE(suite_names() ==
          std::vector<std::string>{"roundtrip", "gradcheck", "params", "sampler", "schedule"});
  REQUIRE_THROWS_WITH(run_suite("nosuch"), Catch::Matchers::ContainsSubstring("unknown suite"));
}

TEST_CASE("roundtrip suite passes", "[verify]") {
  SuiteReport r = run_suite("roundtrip");
  for (const auto& c : r.cases) {
    INFO(c.id << ": " << c.detail);
    REQUIRE(c.pass);
  }
}

TEST_CASE("params suite passes", "[verify]") {
  SuiteReport r = run_suite("params");
  for (const auto& c : r.cases) {
    INFO(c.id << ": " << c.detail);
    REQUIRE(c.pass);
  }
}

TEST_CASE("sampler suite passes", "[verify]") {
  SuiteReport r = run_suite("sampler");
  for (const auto& c : r.cases) {
    INFO(c.id << ": " << c.detail);
    REQUIRE(c.pass);
  }
}

TEST_CASE("schedule suite passes", "[verify]") {
  SuiteReport r = run_suite("schedule");
  for (const auto& c : r.cases) {
    INFO(c.id << ": " << c.detail);
    REQUIRE(c.pass);
  }
}

TEST_CASE("gradcheck suite passes at reduced case count", "[verify]") {
  // The full 20-case sweep runs in the acceptance binary; 3 cases here
  // keep the unit suite quick while exercising every target.
  SuiteReport r = suite_gradcheck(3);
  for (const auto& c : r.cases) {
    INFO(c.id << ": " << c.detail);
    REQUIRE(c.pass);
  }
  REQUIRE(r.cases.size() == 16);
}

TEST_CASE("suite reports serialize to JSON with per-case diagnostics", "[verify]") {
  SuiteReport r = run_suite("schedule");
  nlohmann::json j = suite_to_json(r);
  REQUIRE(j["suite"] == "schedule");
  REQUIRE(j["pass"] == true);
  REQUIRE(j["cases"].is_array());
  REQUIRE(j["cases"].size() == r.cases.size());
  REQUIRE(j["cases"][0].contains("id"));
  REQUIRE(j["cases"][0].contains("detail"));
}

TEST_CASE("patch-size study: constant params, cheaper large patches, resize path", "[verify][slow]") {
  std::vector<std::array<int, 3>> settings{{2, 2, 2}, {3, 3, 3}, {4, 4, 4}, {8, 4, 2}};
  auto rows = patch_size_study(ModelConfig::micro(), settings, 256);
  REQUIRE(rows.size() == 4);

  // Identical parameter count across every patch setting.
  for (const auto& row : rows) REQUIRE(row.params == rows[0].params);

  // Config-B (8,4,2) attends more cheaply than Config-A (2,2,2).
  REQUIRE(rows[3].attention_macs < rows[0].attention_macs);

  // 3,3,3 at 256^2 hits non-divisible feature maps (32,16,8 vs 3) and
  // still reports full coverage since h = n.
  REQUIRE(rows[1].resize_engaged[0]);
  REQUIRE(rows[1].resize_engaged[1]);
  REQUIRE(rows[1].resize_engaged[2]);
  for (int i = 0; i < 3; ++i) REQUIRE(rows[1].coverage[i] == 1.0);

  // 2,2,2 divides every level and covers fully.
  for (int i = 0; i < 3; ++i) {
    REQUIRE_FALSE(rows[0].resize_engaged[i]);
    REQUIRE(rows[0].coverage[i] == 1.0);
  }

  nlohmann::json j = study_to_json(rows);
  REQUIRE(j.size() == 4);
  REQUIRE(j[0]["params"] == rows[0].params);
}
