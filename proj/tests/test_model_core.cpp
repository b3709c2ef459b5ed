#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <limits>

#include "pimforge/dataset.hpp"
#include "pimforge/model.hpp"
#include "pimforge/model_io.hpp"
#include "pimforge/rng.hpp"

#include "helpers.hpp"

using namespace pimforge;

TEST_CASE("minimal one-layer model loads with M = N = 1", "[model]") {
  Model m;
  m.num_conv_layers = 1;
  m.layers.push_back(testutil::make_layer(Tensor4(testutil::conv_shape(1, 1, 1, 1), {0.5})));
  m.validate();

  const auto dir = testutil::scratch_dir("model_minimal");
  save_model(m, dir / "m.json");
  const Model loaded = load_model(dir / "m.json");
  REQUIRE(loaded.num_conv_layers == 1);
  REQUIRE(loaded.num_layers() == 1);
  REQUIRE(loaded.layers[0].weights.at(0, 0, 0, 0) == 0.5);
}

TEST_CASE("save/load round-trips field for field", "[model]") {
  Rng rng(7);
  Model m = testutil::make_desk_model(rng);
  // awkward doubles that expose lossy serialization
  m.layers[0].weights[0] = 0.1;
  m.layers[0].weights[1] = 1.0 / 3.0;
  m.layers[0].weights[2] = -5e-324;  // smallest denormal
  m.layers[0].weights[3] = 12345678.987654321;
  m.layers[1].biases[0] = -0.7;
  m.layers[2].quant = QuantSpec{};
  m.seed = 424242;

  const auto dir = testutil::scratch_dir("model_roundtrip");
  save_model(m, dir / "m.json");
  const Model loaded = load_model(dir / "m.json");
  REQUIRE(loaded == m);
}

TEST_CASE("two saves of the same model are byte-identical", "[model]") {
  Rng rng(11);
  const Model m = testutil::make_desk_model(rng);
  const auto dir = testutil::scratch_dir("model_determinism");
  save_model(m, dir / "a.json");
  save_model(m, dir / "b.json");
  REQUIRE(testutil::slurp(dir / "a.json") == testutil::slurp(dir / "b.json"));
  REQUIRE(!testutil::slurp(dir / "a.json").empty());
}

TEST_CASE("bias length mismatch is reported with the layer index", "[model]") {
  Rng rng(3);
  Model m = testutil::make_desk_model(rng);
  m.layers[1].biases.pop_back();
  REQUIRE_THROWS_WITH(m.validate(), Catch::Matchers::ContainsSubstring("layer 1"));

  // the same defect in a file is caught on load
  Model good = testutil::make_desk_model(rng);
  const auto dir = testutil::scratch_dir("model_badbias");
  save_model(good, dir / "m.json");
  Json doc = load_json_file(dir / "m.json");
  doc["layers"][1]["biases"].erase(0);
  save_json_atomic(doc, dir / "bad.json");
  REQUIRE_THROWS_AS(load_model(dir / "bad.json"), InvariantError);
  REQUIRE_THROWS_WITH(load_model(dir / "bad.json"),
                      Catch::Matchers::ContainsSubstring("layer 1"));
}

TEST_CASE("NaN weights are rejected before write", "[model]") {
  Rng rng(5);
  Model m = testutil::make_desk_model(rng);
  m.layers[0].weights[0] = std::numeric_limits<double>::quiet_NaN();
  const auto dir = testutil::scratch_dir("model_nan");
  REQUIRE_THROWS_AS(save_model(m, dir / "m.json"), InvariantError);
  REQUIRE(!std::filesystem::exists(dir / "m.json"));
}

TEST_CASE("parse failures name the file", "[model]") {
  const auto dir = testutil::scratch_dir("model_parse");
  {
    std::ofstream out(dir / "broken.json");
    out << "{ not json";
  }
  REQUIRE_THROWS_AS(load_model(dir / "broken.json"), ParseError);
  REQUIRE_THROWS_WITH(load_model(dir / "broken.json"),
                      Catch::Matchers::ContainsSubstring("broken.json"));
  REQUIRE_THROWS_AS(load_model(dir / "missing.json"), IoError);
}

TEST_CASE("channel compatibility including the flatten boundary", "[model]") {
  Rng rng(9);
  SECTION("conv chain mismatch") {
    Model m;
    m.num_conv_layers = 2;
    m.layers.push_back(testutil::make_layer(testutil::random_tensor(testutil::conv_shape(4, 1, 3, 3), rng)));
    m.layers.push_back(testutil::make_layer(testutil::random_tensor(testutil::conv_shape(8, 5, 3, 3), rng)));
    REQUIRE_THROWS_AS(m.validate(), InvariantError);
  }
  SECTION("flatten boundary accepts whole multiples only") {
    Model m;
    m.num_conv_layers = 1;
    m.layers.push_back(testutil::make_layer(testutil::random_tensor(testutil::conv_shape(4, 1, 3, 3), rng)));
    m.layers.push_back(testutil::make_layer(testutil::random_tensor(testutil::fc_shape(10, 4 * 49), rng)));
    REQUIRE_NOTHROW(m.validate());
    m.layers[1] = testutil::make_layer(testutil::random_tensor(testutil::fc_shape(10, 4 * 49 + 1), rng));
    REQUIRE_THROWS_AS(m.validate(), InvariantError);
  }
  SECTION("layer kind must match position") {
    Model m;
    m.num_conv_layers = 2;
    m.layers.push_back(testutil::make_layer(testutil::random_tensor(testutil::conv_shape(4, 1, 3, 3), rng)));
    m.layers.push_back(testutil::make_layer(testutil::random_tensor(testutil::fc_shape(10, 4), rng)));
    REQUIRE_THROWS_AS(m.validate(), InvariantError);
  }
}

TEST_CASE("sparsity report basics", "[model]") {
  Rng rng(13);
  Model m = testutil::make_desk_model(rng);

  SECTION("dense model reports 1.0x") {
    const SparsityReport r = sparsity_report(m);
    REQUIRE(r.conv_compression_rate == 1.0);
    REQUIRE(r.layers[0].nonzero_filters == 8);
    REQUIRE(r.layers[0].nonzero_channels == 1);
    REQUIRE(r.layers[0].nonzero_kernels == 8);
  }

  SECTION("half of all CONV weights zeroed reports 2.0x") {
    std::size_t conv_total = 0;
    for (std::size_t i = 0; i < m.num_conv_layers; ++i) {
      conv_total += m.layers[i].weights.size();
    }
    std::size_t to_zero = conv_total / 2;
    for (std::size_t i = 0; i < m.num_conv_layers && to_zero > 0; ++i) {
      auto values = m.layers[i].weights.values();
      for (std::size_t k = 0; k < values.size() && to_zero > 0; ++k) {
        values[k] = 0.0;
        --to_zero;
      }
    }
    const SparsityReport r = sparsity_report(m);
    REQUIRE(r.conv_nonzero_weights == conv_total - conv_total / 2);
    REQUIRE(r.conv_compression_rate == Catch::Approx(2.0));
  }

  SECTION("compression rate is 1.0 iff no CONV weight is zero") {
    REQUIRE(sparsity_report(m).conv_compression_rate == 1.0);
    m.layers[0].weights[0] = 0.0;
    REQUIRE(sparsity_report(m).conv_compression_rate > 1.0);
  }
}

TEST_CASE("IDX image/label pairs load with scaled pixels", "[model][dataset]") {
  const auto dir = testutil::scratch_dir("idx_loader");
  // two 2x3 images with labels 1 and 0, big-endian IDX headers
  const unsigned char images[] = {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 3,
                                  0, 51, 102, 153, 204, 255, 255, 204, 153, 102, 51, 0};
  const unsigned char labels[] = {0, 0, 8, 1, 0, 0, 0, 2, 1, 0};
  {
    std::ofstream fi(dir / "img.idx", std::ios::binary);
    fi.write(reinterpret_cast<const char*>(images), sizeof(images));
    std::ofstream fl(dir / "lab.idx", std::ios::binary);
    fl.write(reinterpret_cast<const char*>(labels), sizeof(labels));
  }
  const Dataset data = load_idx_dataset(dir / "img.idx", dir / "lab.idx");
  REQUIRE(data.size() == 2);
  REQUIRE(data.height == 2);
  REQUIRE(data.width == 3);
  REQUIRE(data.labels == std::vector<int>{1, 0});
  REQUIRE(data.pixels[0] == 0.0);
  REQUIRE(data.pixels[1] == 51.0 / 255.0);
  REQUIRE(data.pixels[5] == 1.0);

  SECTION("count mismatch is rejected") {
    const unsigned char bad_labels[] = {0, 0, 8, 1, 0, 0, 0, 3, 1, 0, 0};
    std::ofstream fl(dir / "bad.idx", std::ios::binary);
    fl.write(reinterpret_cast<const char*>(bad_labels), sizeof(bad_labels));
    fl.close();
    REQUIRE_THROWS_AS(load_idx_dataset(dir / "img.idx", dir / "bad.idx"), ParseError);
  }
  SECTION("truncated image data is rejected") {
    std::ofstream fi(dir / "trunc.idx", std::ios::binary);
    fi.write(reinterpret_cast<const char*>(images), sizeof(images) - 4);
    fi.close();
    REQUIRE_THROWS_AS(load_idx_dataset(dir / "trunc.idx", dir / "lab.idx"), ParseError);
  }
}

TEST_CASE("a layer with k nonzero filters has k nonzero filter rows", "[model][property]") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const LayerShape shape = testutil::conv_shape(1 + rng.index(6), 1 + rng.index(4),
                                                  1 + rng.index(3), 1 + rng.index(3));
    Tensor4 w = testutil::random_tensor(shape, rng);
    // zero a random subset of filters
    for (std::size_t f = 0; f < shape.filters; ++f) {
      if (rng.uniform() < 0.5) {
        for (std::size_t c = 0; c < shape.channels; ++c) {
          for (std::size_t h = 0; h < shape.kernel_h; ++h) {
            for (std::size_t x = 0; x < shape.kernel_w; ++x) w.at(f, c, h, x) = 0.0;
          }
        }
      }
    }
    const LayerSparsity ls = layer_sparsity(w);
    // count nonzero rows of the filter-flattened matrix directly
    std::size_t nonzero_rows = 0;
    const std::size_t row_len = shape.channels * shape.kernel_elems();
    for (std::size_t f = 0; f < shape.filters; ++f) {
      bool any = false;
      for (std::size_t k = 0; k < row_len; ++k) {
        if (w[f * row_len + k] != 0.0) any = true;
      }
      nonzero_rows += any;
    }
    REQUIRE(ls.nonzero_filters == nonzero_rows);
  }
}
