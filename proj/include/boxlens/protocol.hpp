// Copyright 2026 The BoxLens Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Detector wire protocol: newline-delimited JSON over a duplex byte stream.
//
//   detector -> toolkit, once:  {"protocol_version":1, "num_classes":K,
//                                "has_class_probs":bool, "confidence_threshold":t}
//                               or {"error": "..."} when the model cannot load
//   toolkit -> detector:        {"id":n, "width":W, "height":H,
//                                "pixel_format":"rgb8", "data":"<base64>"}
//   detector -> toolkit:        {"id":n, "detections":[{"x1":..,"y1":..,"x2":..,
//                                "y2":..,"objectness":o,"class_id":c,
//                                "class_probs":[...]?}]}
//                               or {"id":n, "error":"..."}
//
// base64 uses the standard alphabet without line wrapping. Responses may
// arrive in any order; they are matched to requests by id.

#pragma once

#include <openssl/evp.h>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "boxlens/detection.hpp"
#include "boxlens/detector.hpp"
#include "boxlens/error.hpp"
#include "boxlens/image.hpp"
#include "boxlens/png_io.hpp"

namespace boxlens::protocol {

inline constexpr int kVersion = 1;

inline std::string base64_encode(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

inline std::string base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw ProtocolError("base64 payload length is not a multiple of 4");
  std::string out(3 * (text.size() / 4), '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw ProtocolError("invalid base64 payload");
  std::size_t len = static_cast<std::size_t>(n);
  // EVP_DecodeBlock counts padding as zero bytes.
  if (!text.empty() && text.back() == '=') --len;
  if (text.size() >= 2 && text[text.size() - 2] == '=') --len;
  out.resize(len);
  return out;
}

struct Handshake {
  int protocol_version = kVersion;
  DetectorCapabilities capabilities;
};

inline nlohmann::json to_json(const Handshake& h) {
  return {{"protocol_version", h.protocol_version},
          {"num_classes", h.capabilities.num_classes},
          {"has_class_probs", h.capabilities.has_class_probs},
          {"confidence_threshold", h.capabilities.confidence_threshold}};
}

inline Handshake parse_handshake(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed handshake: ") + e.what());
  }
  if (j.is_object() && j.contains("error")) {
    throw TransportError("detector failed to start: " + j["error"].dump());
  }
  try {
    Handshake h;
    h.protocol_version = j.at("protocol_version").get<int>();
    if (h.protocol_version != kVersion) {
      throw ProtocolError("unsupported protocol version " + std::to_string(h.protocol_version));
    }
    h.capabilities.num_classes = j.at("num_classes").get<int>();
    h.capabilities.has_class_probs = j.at("has_class_probs").get<bool>();
    h.capabilities.confidence_threshold = j.at("confidence_threshold").get<double>();
    const double t = h.capabilities.confidence_threshold;
    if (!(t >= 0.0 && t <= 1.0)) throw ProtocolError("handshake confidence threshold out of [0,1]");
    if (h.capabilities.num_classes < 1) throw ProtocolError("handshake num_classes must be >= 1");
    return h;
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed handshake: ") + e.what());
  }
}

/// Request record. 8-bit conversion rounds half up; gray images are sent as RGB.
inline nlohmann::json encode_request(std::uint64_t id, const ImageRaster& img) {
  const ImageRaster rgb = to_rgb(img);
  std::string bytes(rgb.data().size(), '\0');
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = static_cast<char>(to_byte(rgb.data()[i]));
  return {{"id", id},
          {"width", img.width()},
          {"height", img.height()},
          {"pixel_format", "rgb8"},
          {"data", base64_encode(bytes)}};
}

struct Request {
  std::uint64_t id = 0;
  ImageRaster image;
};

inline Request decode_request(const nlohmann::json& j) {
  try {
    if (j.at("pixel_format").get<std::string>() != "rgb8") throw ProtocolError("unsupported pixel format");
    const int w = j.at("width").get<int>();
    const int h = j.at("height").get<int>();
    const std::string bytes = base64_decode(j.at("data").get<std::string>());
    if (w < 1 || h < 1 || bytes.size() != static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3) {
      throw ProtocolError("request payload does not match its dimensions");
    }
    std::vector<float> data(bytes.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) data[i] = from_byte(static_cast<std::uint8_t>(bytes[i]));
    return {j.at("id").get<std::uint64_t>(), ImageRaster(w, h, 3, std::move(data))};
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed request: ") + e.what());
  }
}

inline nlohmann::json to_json(const Detection& d) {
  nlohmann::json j = {{"x1", d.bbox().x1},
                      {"y1", d.bbox().y1},
                      {"x2", d.bbox().x2},
                      {"y2", d.bbox().y2},
                      {"objectness", d.objectness()},
                      {"class_id", d.class_id()}};
  if (d.class_probs()) j["class_probs"] = *d.class_probs();
  return j;
}

inline nlohmann::json encode_response(std::uint64_t id, const std::vector<Detection>& dets) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& d : dets) arr.push_back(to_json(d));
  return {{"id", id}, {"detections", std::move(arr)}};
}

/// Parses and validates one detection record. Boxes are clamped to the
/// image when `clamp_to` is given.
inline Detection parse_detection(const nlohmann::json& j,
                                 std::optional<std::pair<int, int>> clamp_to = std::nullopt) {
  try {
    BBox box{j.at("x1").get<double>(), j.at("y1").get<double>(), j.at("x2").get<double>(),
             j.at("y2").get<double>()};
    if (clamp_to) box = box.clamped(clamp_to->first, clamp_to->second);
    std::optional<std::vector<double>> probs;
    if (j.contains("class_probs") && !j["class_probs"].is_null()) {
      probs = j["class_probs"].get<std::vector<double>>();
    }
    return Detection(box, j.at("objectness").get<double>(), j.at("class_id").get<int>(), std::move(probs));
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed detection: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ProtocolError(e.what());
  }
}

struct Response {
  std::uint64_t id = 0;
  std::vector<nlohmann::json> detections;  // validated lazily against the request
  /// Detector-reported failure for this request.
  std::optional<std::string> error;
  /// The record has a usable id but violates the response schema.
  std::optional<std::string> violation;
};

/// Splits a response line into id and payload. Throws ProtocolError when the
/// line is not JSON or carries no usable id.
inline Response parse_response(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("id") || !j["id"].is_number_unsigned()) {
    throw ProtocolError("response without a valid id");
  }
  Response r;
  r.id = j["id"].get<std::uint64_t>();
  if (j.contains("error")) {
    r.error = j["error"].is_string() ? j["error"].get<std::string>() : j["error"].dump();
    return r;
  }
  if (!j.contains("detections") || !j["detections"].is_array()) {
    r.violation = "response has no detections array";
    return r;
  }
  for (auto& d : j["detections"]) r.detections.push_back(std::move(d));
  return r;
}

}  // namespace boxlens::protocol
