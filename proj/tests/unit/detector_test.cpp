// Copyright 2026 The BoxLens Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <chrono>
#include <future>
#include <random>
#include <thread>

#include <gtest/gtest.h>

#include "boxlens/masks.hpp"
#include "boxlens/protocol_client.hpp"
#include "boxlens/synthetic.hpp"
#include "test_util.hpp"

namespace boxlens {
namespace {

using namespace std::chrono_literals;

SyntheticScene tiny_scene(double threshold = 0.0) {
  // 2x2 image, one object whose evidence is all four pixels.
  SyntheticScene s;
  s.width = 2;
  s.height = 2;
  s.emission_threshold = threshold;
  SyntheticObject o;
  o.bbox = {0, 0, 2, 2};
  o.evidence = {0, 1, 2, 3};
  s.objects.push_back(o);
  s.validate();
  return s;
}

TEST(Synthetic, UnmaskedImageGivesFullObjectness) {
  const auto scene = testing::two_object_scene(16, 16, {1, 1, 6, 6}, {9, 8, 15, 14});
  SyntheticDetector det(scene);
  const auto out = det.detect(scene.render());
  ASSERT_EQ(out.size(), 2u);
  for (const auto& d : out) EXPECT_DOUBLE_EQ(d.objectness(), 1.0);
  EXPECT_EQ(out[0].bbox(), scene.objects[0].bbox);
}

TEST(Synthetic, BlackImageGivesNothing) {
  const auto scene = testing::two_object_scene(16, 16, {1, 1, 6, 6}, {9, 8, 15, 14});
  SyntheticDetector det(scene);
  EXPECT_TRUE(det.detect(ImageRaster(16, 16, 3, 0.0f)).empty());
}

TEST(Synthetic, HalfEvidenceOccludedGivesHalf) {
  const auto scene = testing::single_object_scene(8, 8, {0, 0, 4, 4});
  const ImageRaster img = scene.render();
  std::vector<float> m(64, 1.0f);
  for (int y = 0; y < 2; ++y) {
    for (int x = 0; x < 4; ++x) m[static_cast<std::size_t>(y * 8 + x)] = 0.0f;
  }
  const auto out = synthetic_detect(scene, apply_mask(img, ImageRaster(8, 8, 1, m)), img);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_DOUBLE_EQ(out[0].objectness(), 0.5);
}

TEST(Synthetic, OneOfFourEvidencePixelsZeroed) {
  const auto scene = tiny_scene();
  const ImageRaster img = scene.render();
  const auto out = synthetic_detect(scene, apply_mask(img, ImageRaster(2, 2, 1, std::vector<float>{1, 0, 1, 1})), img);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_DOUBLE_EQ(out[0].objectness(), 0.75);
  const auto ident = synthetic_detect(scene, img, img);
  EXPECT_DOUBLE_EQ(ident.at(0).objectness(), 1.0);
}

TEST(Synthetic, EmissionThresholdSuppresses) {
  const auto scene = tiny_scene(0.6);
  const ImageRaster img = scene.render();
  EXPECT_TRUE(
      synthetic_detect(scene, apply_mask(img, ImageRaster(2, 2, 1, std::vector<float>{1, 0, 1, 0})), img).empty());
  EXPECT_EQ(synthetic_detect(scene, img, img).size(), 1u);
}

TEST(Synthetic, PureAndMonotoneInMask) {
  const auto scene = testing::two_object_scene(20, 20, {2, 2, 9, 9}, {11, 10, 18, 19});
  const ImageRaster img = scene.render();
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<float> u(0.f, 1.f);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<float> lo(400), hi(400);
    for (std::size_t p = 0; p < 400; ++p) {
      lo[p] = u(rng);
      hi[p] = std::min(1.0f, lo[p] + u(rng) * 0.5f);
    }
    const ImageRaster m_lo = apply_mask(img, ImageRaster(20, 20, 1, lo));
    const ImageRaster m_hi = apply_mask(img, ImageRaster(20, 20, 1, hi));
    const auto a = synthetic_detect(scene, m_lo, img);
    EXPECT_EQ(a, synthetic_detect(scene, m_lo, img));
    const auto b = synthetic_detect(scene, m_hi, img);
    for (std::size_t o = 0; o < scene.objects.size(); ++o) {
      const double vlo = evidence_visibility(scene.objects[o], m_lo, img);
      const double vhi = evidence_visibility(scene.objects[o], m_hi, img);
      EXPECT_LE(vlo, vhi + 1e-12);
    }
    EXPECT_LE(a.size(), b.size());
  }
}

TEST(Synthetic, ClassProbsAreSmoothedOneHot) {
  auto scene = testing::single_object_scene(6, 6, {1, 1, 4, 4}, 1.0f, 3);
  scene.objects[0].class_id = 2;
  const auto out = SyntheticDetector(scene).detect(scene.render());
  ASSERT_EQ(out.size(), 1u);
  ASSERT_TRUE(out[0].has_class_probs());
  EXPECT_EQ(*out[0].class_probs(), (std::vector<double>{0.05, 0.05, 0.9}));
  scene.has_class_probs = false;
  EXPECT_FALSE(SyntheticDetector(scene).detect(scene.render())[0].has_class_probs());
}

TEST(Synthetic, SizeMismatchAndInvalidScenes) {
  const auto scene = tiny_scene();
  EXPECT_THROW(synthetic_detect(scene, ImageRaster(3, 2, 3, 0.5f), ImageRaster(3, 2, 3, 0.5f)), InvalidArgument);
  SyntheticScene bad = scene;
  bad.objects[0].evidence = {};
  EXPECT_THROW(bad.validate(), InvalidArgument);
  bad = scene;
  bad.objects[0].evidence = {4};
  EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(Synthetic, SceneFromJson) {
  const auto j = nlohmann::json::parse(R"({
    "width": 6, "height": 5, "num_classes": 2, "emission_threshold": 0.25,
    "background": [0.1, 0.2, 0.3],
    "objects": [
      {"class_id": 1, "bbox": [0, 0, 2, 2], "color": 0.9},
      {"bbox": [3, 1, 6, 5], "evidence": {"rect": [3, 1, 4, 3]}},
      {"bbox": [0, 3, 2, 5], "evidence": [[0, 3], [1, 4]]}
    ]})");
  const auto s = scene_from_json(j);
  EXPECT_EQ(s.width, 6);
  EXPECT_EQ(s.objects.size(), 3u);
  EXPECT_EQ(s.objects[0].evidence, (std::vector<std::size_t>{0, 1, 6, 7}));
  EXPECT_EQ(s.objects[1].evidence, (std::vector<std::size_t>{9, 15}));
  EXPECT_EQ(s.objects[2].evidence, (std::vector<std::size_t>{18, 25}));
  EXPECT_FLOAT_EQ(s.render().at(5, 0, 2), 0.3f);
  EXPECT_THROW(scene_from_json(nlohmann::json::parse(R"({"width": 2})")), InvalidArgument);
  EXPECT_THROW(scene_from_json(nlohmann::json::parse(
                   R"({"width": 2, "height": 2, "objects": [{"bbox": [0,0,1,1], "evidence": [[5,5]]}]})")),
               InvalidArgument);
}

TEST(Protocol, Base64RoundTrip) {
  std::mt19937_64 rng(4);
  for (std::size_t n = 0; n < 40; ++n) {
    std::string s(n, '\0');
    for (auto& c : s) c = static_cast<char>(rng() & 0xFF);
    EXPECT_EQ(protocol::base64_decode(protocol::base64_encode(s)), s);
  }
  EXPECT_EQ(protocol::base64_encode("foob"), "Zm9vYg==");
  EXPECT_THROW(protocol::base64_decode("Zm9v!"), ProtocolError);
}

TEST(Protocol, HandshakeParsing) {
  const auto h = protocol::parse_handshake(
      R"({"protocol_version":1,"num_classes":80,"has_class_probs":false,"confidence_threshold":0.7})");
  EXPECT_EQ(h.capabilities.num_classes, 80);
  EXPECT_FALSE(h.capabilities.has_class_probs);
  EXPECT_DOUBLE_EQ(h.capabilities.confidence_threshold, 0.7);
  EXPECT_THROW(protocol::parse_handshake(R"({"error":"no model"})"), TransportError);
  EXPECT_THROW(protocol::parse_handshake("{oops"), ProtocolError);
  EXPECT_THROW(protocol::parse_handshake(
                   R"({"protocol_version":2,"num_classes":1,"has_class_probs":false,"confidence_threshold":0.5})"),
               ProtocolError);
  EXPECT_THROW(protocol::parse_handshake(
                   R"({"protocol_version":1,"num_classes":1,"has_class_probs":false,"confidence_threshold":1.5})"),
               ProtocolError);
}

TEST(Protocol, RequestEncodesRgb8) {
  const ImageRaster gray(2, 1, 1, std::vector<float>{0.5f, 1.0f});
  const auto j = protocol::encode_request(7, gray);
  EXPECT_EQ(j["id"], 7);
  EXPECT_EQ(j["pixel_format"], "rgb8");
  const auto req = protocol::decode_request(j);
  EXPECT_EQ(req.id, 7u);
  EXPECT_EQ(req.image.channels(), 3);
  EXPECT_FLOAT_EQ(req.image.at(0, 0, 1), 128.0f / 255.0f);
  EXPECT_FLOAT_EQ(req.image.at(1, 0, 2), 1.0f);
  auto bad = j;
  bad["width"] = 3;
  EXPECT_THROW(protocol::decode_request(bad), ProtocolError);
}

TEST(Protocol, ResponseParsing) {
  EXPECT_THROW(protocol::parse_response("{nope"), ProtocolError);
  EXPECT_THROW(protocol::parse_response(R"({"detections":[]})"), ProtocolError);
  EXPECT_THROW(protocol::parse_response(R"({"id":-1,"detections":[]})"), ProtocolError);
  const auto e = protocol::parse_response(R"({"id":3,"error":"cuda"})");
  EXPECT_EQ(e.id, 3u);
  EXPECT_EQ(*e.error, "cuda");
  EXPECT_TRUE(protocol::parse_response(R"({"id":3})").violation.has_value());
  try {
    protocol::parse_detection(nlohmann::json::parse(R"({"x1":0,"y1":0,"x2":1,"y2":1,"objectness":1.2,"class_id":0})"));
    FAIL();
  } catch (const ProtocolError& err) {
    EXPECT_NE(std::string(err.what()).find("objectness out of range"), std::string::npos);
  }
}

// In-process detector double on the far end of a socket pair.
class ServerDouble {
 public:
  ServerDouble() {
    auto [a, b] = make_socket_pair();
    client_end_ = std::move(a);
    server_end_ = std::move(b);
    reader_ = std::make_unique<LineReader>(server_end_.get());
  }
  UniqueFd take_client_end() { return std::move(client_end_); }

  void send(const std::string& line) { write_all(server_end_.get(), line + "\n"); }
  void send_handshake(bool probs = false) {
    protocol::Handshake h;
    h.capabilities = {probs, 2, 0.5};
    send(protocol::to_json(h).dump());
  }
  std::optional<protocol::Request> receive(std::chrono::milliseconds timeout = 5000ms) {
    std::string line;
    if (reader_->read_line(line, timeout) != LineReader::Status::line) return std::nullopt;
    return protocol::decode_request(nlohmann::json::parse(line));
  }
  void close() { server_end_.reset(); }

 private:
  UniqueFd client_end_, server_end_;
  std::unique_ptr<LineReader> reader_;
};

TEST(ProtocolClient, EchoRoundTripIsFieldExact) {
  ServerDouble server;
  server.send_handshake(true);
  ProtocolClient client(server.take_client_end(), {5000ms, 8});
  EXPECT_TRUE(client.handshake().capabilities.has_class_probs);
  const Detection fixed({1.25, 2.5, 7.75, 8.0}, 0.8125, 1, std::vector<double>{0.1875, 0.8125});
  auto fut = std::async(std::launch::async, [&] { return external_detect(client, ImageRaster(10, 10, 3, 0.5f)); });
  const auto req = server.receive();
  ASSERT_TRUE(req);
  EXPECT_EQ(req->image.width(), 10);
  server.send(protocol::encode_response(req->id, {fixed}).dump());
  const auto got = fut.get();
  ASSERT_EQ(got.size(), 1u);
  EXPECT_EQ(got[0], fixed);
}

TEST(ProtocolClient, ObjectnessOutOfRangeFailsThatRequest) {
  ServerDouble server;
  server.send_handshake();
  ProtocolClient client(server.take_client_end(), {5000ms, 8});
  auto fut = client.submit(ImageRaster(4, 4, 3, 0.5f));
  const auto req = server.receive();
  ASSERT_TRUE(req);
  server.send(R"({"id":)" + std::to_string(req->id) +
              R"(,"detections":[{"x1":0,"y1":0,"x2":1,"y2":1,"objectness":1.2,"class_id":0}]})");
  try {
    fut.get();
    FAIL();
  } catch (const ProtocolError& e) {
    EXPECT_NE(std::string(e.what()).find("objectness out of range"), std::string::npos);
  }
}

TEST(ProtocolClient, HundredShuffledResponsesMatchedById) {
  ServerDouble server;
  server.send_handshake();
  ProtocolClient client(server.take_client_end(), {5000ms, 128});
  std::vector<std::future<std::vector<Detection>>> futures;
  // Each request is tagged by its image width so replies can be checked.
  for (int i = 0; i < 100; ++i) futures.push_back(client.submit(ImageRaster(i + 1, 2, 3, 0.5f)));
  std::vector<protocol::Request> reqs;
  for (int i = 0; i < 100; ++i) {
    auto r = server.receive();
    ASSERT_TRUE(r);
    reqs.push_back(std::move(*r));
  }
  std::shuffle(reqs.begin(), reqs.end(), std::mt19937_64(8));
  for (const auto& r : reqs) {
    const double w = r.image.width();
    server.send(protocol::encode_response(r.id, {Detection({0, 0, w, 1}, 0.5, 0)}).dump());
  }
  for (int i = 0; i < 100; ++i) {
    ASSERT_EQ(futures[static_cast<std::size_t>(i)].wait_for(5s), std::future_status::ready);
    const auto d = futures[static_cast<std::size_t>(i)].get();
    ASSERT_EQ(d.size(), 1u);
    EXPECT_DOUBLE_EQ(d[0].bbox().x2, i + 1);
  }
}

TEST(ProtocolClient, MalformedLinePoisonsConnection) {
  ServerDouble server;
  server.send_handshake();
  ProtocolClient client(server.take_client_end(), {5000ms, 8});
  auto a = client.submit(ImageRaster(2, 2, 3, 0.5f));
  auto b = client.submit(ImageRaster(2, 2, 3, 0.5f));
  server.send("{this is not json");
  ASSERT_EQ(a.wait_for(5s), std::future_status::ready);
  EXPECT_THROW(a.get(), ProtocolError);
  EXPECT_THROW(b.get(), ProtocolError);
  EXPECT_THROW(client.submit(ImageRaster(2, 2, 3, 0.5f)), ProtocolError);
}

TEST(ProtocolClient, UnknownIdPoisonsConnection) {
  ServerDouble server;
  server.send_handshake();
  ProtocolClient client(server.take_client_end(), {5000ms, 8});
  auto a = client.submit(ImageRaster(2, 2, 3, 0.5f));
  server.send(R"({"id":12345,"detections":[]})");
  ASSERT_EQ(a.wait_for(5s), std::future_status::ready);
  EXPECT_THROW(a.get(), ProtocolError);
}

TEST(ProtocolClient, ErrorResponseIsTransportErrorAndConnectionSurvives) {
  ServerDouble server;
  server.send_handshake();
  ProtocolClient client(server.take_client_end(), {5000ms, 8});
  auto a = client.submit(ImageRaster(2, 2, 3, 0.5f));
  const auto ra = server.receive();
  server.send(R"({"id":)" + std::to_string(ra->id) + R"(,"error":"oom"})");
  EXPECT_THROW(a.get(), TransportError);
  auto b = client.submit(ImageRaster(2, 2, 3, 0.5f));
  const auto rb = server.receive();
  server.send(protocol::encode_response(rb->id, {}).dump());
  EXPECT_TRUE(b.get().empty());
}

TEST(ProtocolClient, EndOfStreamIsTransportError) {
  ServerDouble server;
  server.send_handshake();
  ProtocolClient client(server.take_client_end(), {5000ms, 8});
  auto a = client.submit(ImageRaster(2, 2, 3, 0.5f));
  server.receive();
  server.close();
  ASSERT_EQ(a.wait_for(5s), std::future_status::ready);
  EXPECT_THROW(a.get(), TransportError);
}

TEST(ProtocolClient, TimeoutsAreTransportErrors) {
  {
    ServerDouble silent;
    EXPECT_THROW(ProtocolClient(silent.take_client_end(), {100ms, 1}), TransportError);
  }
  ServerDouble server;
  server.send_handshake();
  ProtocolClient client(server.take_client_end(), {100ms, 1});
  EXPECT_THROW(client.detect(ImageRaster(2, 2, 3, 0.5f)), TransportError);
}

TEST(ExternalDetector, MockSceneMatchesInProcessOracle) {
  testing::TempDir dir;
  const auto scene = testing::two_object_scene(24, 20, {2, 2, 10, 9}, {13, 8, 22, 18});
  {
    nlohmann::json j = {{"width", 24}, {"height", 20}, {"background", 0.3}, {"objects", nlohmann::json::array()}};
    for (const auto& o : scene.objects) {
      j["objects"].push_back({{"bbox", {o.bbox.x1, o.bbox.y1, o.bbox.x2, o.bbox.y2}}, {"color", 0.9}});
    }
    std::ofstream(dir.str("scene.json")) << j.dump();
  }
  ExternalDetector det(testing::mock_detector_path() + " --scene " + dir.str("scene.json"), {5000ms, 16});
  EXPECT_EQ(det.capabilities().num_classes, 1);
  EXPECT_EQ(det.max_concurrency(), 16u);
  const ImageRaster img = scene.render();
  const auto masks = gen_rise_masks(20, 24, {4, 4, 0.5}, 100, 1);
  for (std::size_t i = 0; i < masks.count(); ++i) {
    const ImageRaster masked = apply_mask(img, masks.mask(i));
    const auto remote = det.detect(masked);
    // The wire carries 8-bit samples; compare against the oracle on what was sent.
    const auto sent = protocol::decode_request(protocol::encode_request(0, masked)).image;
    const auto orig = protocol::decode_request(protocol::encode_request(0, img)).image;
    const auto local = synthetic_detect(scene, sent, orig);
    ASSERT_EQ(remote.size(), local.size());
    for (std::size_t k = 0; k < local.size(); ++k) {
      EXPECT_NEAR(remote[k].objectness(), local[k].objectness(), 1e-6);
      EXPECT_EQ(remote[k].bbox(), local[k].bbox());
    }
  }
}

TEST(ExternalDetector, ShuffledMockAnswersConcurrentRequests) {
  ExternalDetector det(testing::mock_detector_path() + " --echo 0,0,2,2,0.5,0 --shuffle 10", {5000ms, 32});
  std::vector<std::future<std::vector<Detection>>> futures;
  for (int i = 0; i < 50; ++i) futures.push_back(det.client().submit(ImageRaster(3, 3, 3, 0.5f)));
  for (auto& f : futures) {
    ASSERT_EQ(f.wait_for(5s), std::future_status::ready);
    EXPECT_EQ(f.get().size(), 1u);
  }
}

TEST(ExternalDetector, HandshakeErrorAndChildExit) {
  EXPECT_THROW(ExternalDetector(testing::mock_detector_path() + " --fail-handshake", {5000ms, 1}), TransportError);
  ExternalDetector det(testing::mock_detector_path() + " --echo 0,0,1,1,0.5,0 --exit-after 1", {5000ms, 1});
  EXPECT_EQ(det.detect(ImageRaster(2, 2, 3, 0.5f)).size(), 1u);
  try {
    det.detect(ImageRaster(2, 2, 3, 0.5f));
    FAIL();
  } catch (const TransportError& e) {
    EXPECT_NE(std::string(e.what()).find("closed"), std::string::npos);
  }
  EXPECT_THROW(ExternalDetector("/nonexistent/detector-binary", {2000ms, 1}), TransportError);
}

TEST(ExternalDetector, DetectorErrorDistinctFromNoDetections) {
  ExternalDetector det(testing::mock_detector_path() + " --echo 0,0,1,1,0.5,0 --error-on 1", {5000ms, 1});
  EXPECT_EQ(det.detect(ImageRaster(2, 2, 3, 0.5f)).size(), 1u);
  EXPECT_THROW(det.detect(ImageRaster(2, 2, 3, 0.5f)), TransportError);
  EXPECT_EQ(det.detect(ImageRaster(2, 2, 3, 0.5f)).size(), 1u);
}

}  // namespace
}  // namespace boxlens
