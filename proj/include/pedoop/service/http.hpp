#pragma once

// HTTP/JSON routes over TrialService.

#include "pedoop/service/service.hpp"

#include <httplib.h>
#include <json.hpp>

#include <iostream>
#include <string>

namespace pedoop::service {

namespace detail {

inline void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <class F>
void handle(httplib::Response& res, int ok_status, F&& f) {
  try {
    send_json(res, ok_status, f());
  } catch (const ServiceError& e) {
    send_json(res, e.status(), {{"error", e.what()}, {"status", e.status()}});
  } catch (const json::exception& e) {
    send_json(res, 422, {{"error", std::string("malformed JSON: ") + e.what()}, {"status", 422}});
  } catch (const std::exception& e) {
    send_json(res, 500, {{"error", e.what()}, {"status", 500}});
  }
}

inline json parse_body(const httplib::Request& req, bool allow_empty = false) {
  if (req.body.empty()) {
    if (allow_empty) return json();
    throw invalid("request body is empty");
  }
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw invalid(std::string("malformed JSON: ") + e.what());
  }
}

}  // namespace detail

inline void register_routes(httplib::Server& server, TrialService& svc) {
  using detail::handle;
  using detail::parse_body;
  const std::string id = R"(/trials/([A-Za-z0-9_-]+))";

  server.Post("/trials", [&svc](const httplib::Request& req, httplib::Response& res) {
    handle(res, 201, [&] { return svc.create(parse_body(req)); });
  });
  server.Post(id + "/phase1/cohorts", [&svc](const httplib::Request& req, httplib::Response& res) {
    handle(res, 200, [&] { return svc.submit_phase1_cohort(req.matches[1], parse_body(req)); });
  });
  server.Post(id + "/phase1/complete", [&svc](const httplib::Request& req, httplib::Response& res) {
    handle(res, 200, [&] { return svc.complete_phase1(req.matches[1], parse_body(req, true)); });
  });
  server.Post(id + "/phase2/outcomes", [&svc](const httplib::Request& req, httplib::Response& res) {
    handle(res, 200, [&] { return svc.submit_phase2_outcomes(req.matches[1], parse_body(req)); });
  });
  server.Get(id, [&svc](const httplib::Request& req, httplib::Response& res) {
    handle(res, 200, [&] { return svc.get_trial(req.matches[1]); });
  });
  server.Get(id + "/posterior", [&svc](const httplib::Request& req, httplib::Response& res) {
    handle(res, 200, [&] { return svc.get_posterior(req.matches[1]); });
  });
  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      detail::send_json(res, res.status, {{"error", "not found"}, {"status", res.status}});
    }
  });
  // Browser console on another origin.
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
}

}  // namespace pedoop::service
