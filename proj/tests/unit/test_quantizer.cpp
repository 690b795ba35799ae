#include <cmath>

#include "doctest.h"
#include "pft/model_io.hpp"
#include "pft/quantizer.hpp"
#include "pft/trainer.hpp"
#include "support.hpp"

using namespace pft;

TEST_CASE("rounding is half away from zero") {
  FloatParams p = FloatParams::zeros({8, 1, 4});
  p.w1(0, 0) = 0.5;
  p.w1(1, 0) = -0.5;
  p.w1(2, 0) = 1.5;
  p.w1(3, 0) = -2.5;
  p.w1(4, 0) = 0.49999;
  const QuantParams q = quantize(p, 0);
  CHECK(q.w1(0, 0) == 1);
  CHECK(q.w1(1, 0) == -1);
  CHECK(q.w1(2, 0) == 2);
  CHECK(q.w1(3, 0) == -3);
  CHECK(q.w1(4, 0) == 0);
  CHECK(quantize(p, 1).w1(0, 0) == 1);
}

TEST_CASE("output biases use the squared scale") {
  FloatParams p = FloatParams::zeros({8, 1, 4});
  p.b1[0] = 0.75;
  p.b2[0] = 0.75;
  const QuantParams q = quantize(p, 2);
  CHECK(q.b1[0] == 3);
  CHECK(q.b2[0] == 12);
  const FloatParams back = dequantize(q);
  CHECK(back.b1[0] == 0.75);
  CHECK(back.b2[0] == 0.75);
}

TEST_CASE("quantization error is at most half a step") {
  const FloatParams p = init_params({8, 16, 256}, 9);
  for (int prec = 0; prec <= 6; ++prec) {
    const FloatParams back = dequantize(quantize(p, prec));
    const double step = std::ldexp(1.0, -prec);
    for (std::size_t i = 0; i < p.w1.size(); ++i) CHECK(std::abs(back.w1.data()[i] - p.w1.data()[i]) <= step / 2);
    for (std::size_t i = 0; i < p.w2.size(); ++i) CHECK(std::abs(back.w2.data()[i] - p.w2.data()[i]) <= step / 2);
  }
}

TEST_CASE("minimal widths") {
  CHECK(minimal_width(std::vector<std::int64_t>{0}) == 1);
  CHECK(minimal_width(std::vector<std::int64_t>{-1}) == 1);
  CHECK(minimal_width(std::vector<std::int64_t>{1}) == 2);
  CHECK(minimal_width(std::vector<std::int64_t>{-128, 127}) == 8);
  CHECK(minimal_width(std::vector<std::int64_t>{128}) == 9);
  CHECK(minimal_width(std::vector<std::int64_t>{-129}) == 9);
}

TEST_CASE("width override and magnitude limits") {
  FloatParams p = FloatParams::zeros({8, 1, 4});
  p.w1(0, 0) = 3.0;
  CHECK(quantize(p, 1, 8).group_widths == GroupWidths{8, 8, 8, 8});
  CHECK_THROWS_AS(quantize(p, 1, 3), Error);
  p.w1(0, 0) = 1e9;
  CHECK_THROWS_AS(quantize(p, 1), Error);
}

TEST_CASE("verification reports accuracy, ties and margin") {
  QuantParams q = QuantParams::zeros({8, 1, 4}, 0);
  q.group_widths = {2, 2, 2, 3};
  q.b2 = {2, 1, 0, 0};
  Dataset d;
  for (int x = 0; x < 256; ++x) d.samples.push_back({static_cast<std::uint8_t>(x), 0});
  QuantReport r = verify_quantized(q, d);
  CHECK(r.accuracy == 1.0);
  CHECK(r.tie_count == 0);
  CHECK(r.min_margin == 1);
  q.b2 = {1, 1, 0, 0};
  r = verify_quantized(q, d);
  CHECK(r.accuracy == 0.0);
  CHECK(r.tie_count == 256);
  CHECK(r.min_margin == 0);
}

TEST_CASE("model files round-trip and hash only parameters") {
  const QuantParams q = test::random_quant({8, 3, 5}, 4, 6, 2);
  ModelFile m;
  m.key_byte = 0x25;
  m.quant_params = q;
  m.training.seed = 9;
  const ModelFile back = model_from_json(nlohmann::json::parse(dump_json(to_json(m))));
  CHECK(back.quantized() == q);
  CHECK(back.key_byte == m.key_byte);
  CHECK(back.training == m.training);
  CHECK(dump_json(to_json(back)) == dump_json(to_json(m)));
  const std::string text = dump_json(to_json(m));
  CHECK(text.find("\"format_version\"") < text.find("\"topology\""));
  CHECK(text.find("\"input_bit_order\": \"lsb_first\"") != std::string::npos);
  m.training.seed = 10;
  CHECK(model_hash(m.quantized()) == model_hash(q));
  QuantParams other = q;
  other.w1(0, 0) += 1;
  CHECK(model_hash(other) != model_hash(q));
  CHECK(model_hash(q).size() == 16);

  ModelFile f;
  f.float_params = init_params({8, 3, 5}, 2);
  const ModelFile fb = model_from_json(nlohmann::json::parse(dump_json(to_json(f))));
  CHECK(fb.real() == *f.float_params);
  CHECK_FALSE(fb.key_byte.has_value());
  CHECK_THROWS_AS(fb.quantized(), Error);
}
