#include <doctest.h>

#include <algorithm>
#include <fstream>

#include "testutil.hpp"
#include "whisperline/error.hpp"
#include "whisperline/models.hpp"
#include "whisperline/rng.hpp"

using namespace whisperline;

namespace {

std::vector<LayerType> layer_types(const ModelSpec& spec) {
  std::vector<LayerType> t;
  for (const auto& l : spec.layers) t.push_back(l.type);
  return t;
}

}  // namespace

TEST_CASE("arch4 layer list") {
  const ModelSpec spec = build_spec("arch4", 128);
  const std::vector<LayerType> expected = {
      LayerType::Conv1D, LayerType::Conv1D, LayerType::MaxPool1D,
      LayerType::Conv1D, LayerType::Conv1D, LayerType::MaxPool1D,
      LayerType::Dense,  LayerType::ReLU,   LayerType::Dropout,
      LayerType::Dense,  LayerType::Softmax};
  CHECK(layer_types(spec) == expected);
  CHECK(spec.layers[0].kernel == 20);
  CHECK(spec.layers[0].out_ch == 32);
  CHECK(spec.layers[1].kernel == 20);
  CHECK(spec.layers[3].kernel == 10);
  CHECK(spec.layers[3].out_ch == 64);
  CHECK(spec.layers[4].kernel == 10);
  // every conv carries its ReLU activation
  for (const auto& l : spec.layers)
    if (l.type == LayerType::Conv1D) CHECK(l.relu);
  // dense input is the channel-major flatten of 32 positions x 64 channels
  CHECK(spec.layers[6].in == 2048);
  CHECK(spec.layers[6].out == 1024);
  CHECK(spec.layers[9].in == 1024);
  CHECK(spec.layers[9].out == 2);
}

TEST_CASE("arch1 layer list") {
  const ModelSpec spec = build_spec("arch1", 128);
  const std::vector<LayerType> expected = {
      LayerType::Conv1D, LayerType::MaxPool1D, LayerType::Conv1D, LayerType::MaxPool1D,
      LayerType::Dense,  LayerType::ReLU,      LayerType::Dropout, LayerType::Dense,
      LayerType::Softmax};
  CHECK(layer_types(spec) == expected);
  CHECK(spec.layers[0].kernel == 10);
  CHECK(spec.layers[0].out_ch == 32);
  CHECK(spec.layers[2].kernel == 5);
  CHECK(spec.layers[2].out_ch == 64);
  CHECK(spec.layers[4].in == 32 * 64);
}

TEST_CASE("arch5 and arch6 add a 512 dense layer") {
  for (const char* name : {"arch5", "arch6"}) {
    const ModelSpec spec = build_spec(name, 128);
    int dense_count = 0;
    for (const auto& l : spec.layers)
      if (l.type == LayerType::Dense) ++dense_count;
    CHECK(dense_count == 3);  // 1024, 512, head
    // dropout sits right before the head
    const auto types = layer_types(spec);
    const auto it = std::find(types.begin(), types.end(), LayerType::Dropout);
    REQUIRE(it != types.end());
    CHECK(*(it + 1) == LayerType::Dense);
    CHECK(*(it + 2) == LayerType::Softmax);
  }
}

TEST_CASE("unknown architectures and bad input dims are rejected") {
  CHECK_THROWS_AS(build_spec("arch7", 128), ConfigError);
  CHECK_THROWS_AS(build_spec("arch0", 128), ConfigError);
  CHECK_THROWS_AS(build_spec("arch4", 100), ConfigError);
}

TEST_CASE("parameter counting") {
  SUBCASE("dense 1024 -> 2") {
    ModelSpec spec;
    spec.input_dim = 64;
    LayerSpec d;
    d.type = LayerType::Dense;
    d.in = 1024;
    d.out = 2;
    spec.layers.push_back(d);
    CHECK(count_params(spec) == 1024 * 2 + 2);
  }
  SUBCASE("conv kernel 10, 1 -> 32 channels") {
    ModelSpec spec;
    spec.input_dim = 128;
    LayerSpec c;
    c.type = LayerType::Conv1D;
    c.kernel = 10;
    c.in_ch = 1;
    c.out_ch = 32;
    spec.layers.push_back(c);
    CHECK(count_params(spec) == 10 * 32 + 32);
  }
  SUBCASE("arch4 total, tallied by hand") {
    // conv(20,1,32): 672; conv(20,32,32): 20512; conv(10,32,64): 20544;
    // conv(10,64,64): 41024; dense 2048x1024+1024: 2098176; head: 2050
    CHECK(count_params(build_spec("arch4", 128)) == 672 + 20512 + 20544 + 41024 + 2098176 + 2050);
  }
  SUBCASE("lstm64x2 on 64-dim input, tallied by hand") {
    // each lstm layer: 4*64*64 + 4*64*64 + 4*64 = 33024; head 64*2+2 = 130
    CHECK(count_params(build_spec("lstm64x2", 64)) == 33024 + 33024 + 130);
  }
}

TEST_CASE("per-frame flop counts from the hand tally") {
  // arch4 on 128-dim input (multiply-adds doubled):
  //   conv1 128*20*1*32    =    81920 MACs
  //   conv2 128*20*32*32   =  2621440
  //   conv3  64*10*32*64   =  1310720
  //   conv4  64*10*64*64   =  2621440
  //   dense 2048*1024      =  2097152
  //   head  1024*2         =     2048
  //   total                =  8734720 MACs -> 17469440 FLOPs
  const ModelSpec arch4 = build_spec("arch4", 128);
  CHECK(count_flops_per_frame(arch4) == 17469440);
  CHECK(head_flops_per_frame(arch4) == 4096);

  // lstm64x2 on 64-dim input:
  //   layer1 4*64*(64+64) = 32768; layer2 same; head 64*2 = 128
  //   total 65664 MACs -> 131328 FLOPs
  const ModelSpec lstm = build_spec("lstm64x2", 64);
  CHECK(count_flops_per_frame(lstm) == 131328);
  CHECK(head_flops_per_frame(lstm) == 256);

  // the recurrent state machinery costs far more per emitted posterior than
  // the CNN's decision head
  CHECK(count_flops_per_frame(lstm) > head_flops_per_frame(arch4));
}

TEST_CASE("describe lists every layer") {
  const std::string text = describe(build_spec("arch4", 128));
  CHECK(text.find("conv1d(k=20, 32 filters, relu)") != std::string::npos);
  CHECK(text.find("dense(2048 -> 1024)") != std::string::npos);
  CHECK(text.find("total params: 2182978") != std::string::npos);
  CHECK(text.find("flops/frame") != std::string::npos);
}

TEST_CASE("checkpoint round-trip reproduces forward outputs bit-exactly") {
  testutil::TempDir dir("ckpt");
  Checkpoint ckpt;
  ckpt.net = build("arch2", 128, 99);
  ckpt.norm_stats.mean.assign(128, 0.25);
  ckpt.norm_stats.stddev.assign(128, 2.0);
  ckpt.metadata["seed"] = 99;
  ckpt.metadata["feature"] = "qse_q1";

  Rng rng(31);
  std::vector<float> frames(50 * 128);
  for (auto& v : frames) v = static_cast<float>(rng.uniform(-2.0, 2.0));
  NetCache cache;
  std::vector<float> before;
  net_forward(ckpt.net, frames.data(), 50, false, nullptr, cache, before);

  const auto path = dir.path() / "m.ckpt";
  save_checkpoint(ckpt, path);
  const Checkpoint back = load_checkpoint(path);
  CHECK(back.net.spec.name == "arch2");
  CHECK(back.norm_stats.mean == ckpt.norm_stats.mean);
  CHECK(back.metadata["seed"] == 99);

  std::vector<float> after;
  net_forward(back.net, frames.data(), 50, false, nullptr, cache, after);
  CHECK(before == after);
}

TEST_CASE("checkpoint corruption is rejected") {
  testutil::TempDir dir("ckpt_bad");
  Checkpoint ckpt;
  ckpt.net = build("arch1", 64, 7);
  const auto path = dir.path() / "m.ckpt";
  save_checkpoint(ckpt, path);

  SUBCASE("corrupted magic") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.write("NOPE", 4);
    f.close();
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  }
  SUBCASE("truncated payload") {
    const auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size - 128);
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  }
  SUBCASE("declared block sizes cross-checked against the payload") {
    // grow the file: payload no longer matches the declared parameter counts
    std::ofstream f(path, std::ios::app | std::ios::binary);
    const float junk[8] = {0};
    f.write(reinterpret_cast<const char*>(junk), sizeof(junk));
    f.close();
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  }
}

TEST_CASE("all architectures build and emit normalized posteriors at dim 128") {
  Rng rng(41);
  std::vector<float> frame(128);
  for (auto& v : frame) v = static_cast<float>(rng.uniform(-1.5, 1.5));
  for (const char* name : {"arch1", "arch2", "arch3", "arch4", "arch5", "arch6"}) {
    CAPTURE(name);
    const Network net = build(name, 128, 3);
    NetCache cache;
    std::vector<float> p;
    net_forward(net, frame.data(), 1, false, nullptr, cache, p);
    REQUIRE(p.size() == 2);
    CHECK(p[0] + p[1] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(p[0] >= 0.0f);
    CHECK(p[1] >= 0.0f);
  }
}
