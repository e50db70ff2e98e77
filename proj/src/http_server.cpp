#include <png.h>

#include <cmath>

#include "httplib.h"
#include "json.hpp"
#include "stedq/service.hpp"
#include "stedq/text.hpp"

namespace stedq {

using json = nlohmann::json;

std::string encode_png(const Image& image) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  std::string out;
  std::vector<png_byte> row(image.width);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("png encoding failed");
  }
  png_set_write_fn(
      png, &out,
      [](png_structp p, png_bytep data, png_size_t len) {
        static_cast<std::string*>(png_get_io_ptr(p))->append(reinterpret_cast<const char*>(data), len);
      },
      nullptr);
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x)
      row[x] = static_cast<png_byte>(std::lround(std::clamp(image.at(x, y), 0.0, 1.0) * 255.0));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

namespace {

json optional_number(std::size_t n, double v) { return n == 0 ? json(nullptr) : json(v); }

json report_json(const BinnedReport& r) {
  json bins = json::array();
  for (std::size_t b = 0; b < kBins; ++b) {
    const auto& s = r.bins[b];
    bins.push_back({{"bin", bin_label(b)},
                    {"n_testers", s.n_testers},
                    {"mean_confusion", optional_number(s.n_testers, s.mean_confusion)},
                    {"std_confusion", optional_number(s.n_testers, s.std_confusion)},
                    {"n_testers_domination", s.n_testers_domination},
                    {"mean_domination", optional_number(s.n_testers_domination, s.mean_domination)},
                    {"std_domination", optional_number(s.n_testers_domination, s.std_domination)},
                    {"T", s.totals.t},
                    {"P", s.totals.p},
                    {"E", s.totals.e},
                    {"discarded", s.totals.n - s.totals.effective}});
  }
  return {{"system", r.system}, {"testers", r.testers}, {"bins", bins}};
}

void send_error(httplib::Response& res, const std::string& code, int status, const std::string& message) {
  res.status = status;
  res.set_content(json{{"error", code}, {"message", message}}.dump(), "application/json");
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
  try {
    json j = json::parse(req.body);
    if (!j.is_object()) throw ServiceError("bad_request", 400, "request body must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw ServiceError("bad_request", 400, std::string("invalid JSON: ") + e.what());
  }
}

template <typename T>
T field(const json& j, const char* key) {
  if (!j.contains(key)) throw ServiceError("bad_request", 400, std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ServiceError("bad_request", 400, std::string("field '") + key + "' has the wrong type");
  }
}

}  // namespace

struct StudyHttpServer::Impl {
  StudyService& service;
  httplib::Server server;

  explicit Impl(StudyService& s) : service(s) {}

  template <typename Handler>
  httplib::Server::Handler guarded(Handler h) {
    return [h](const httplib::Request& req, httplib::Response& res) {
      try {
        h(req, res);
      } catch (const ServiceError& e) {
        send_error(res, e.code(), e.http_status(), e.what());
      } catch (const DataError& e) {
        send_error(res, "data_error", 500, e.what());
      } catch (const std::exception& e) {
        send_error(res, "internal", 500, e.what());
      }
    };
  }
};

StudyHttpServer::StudyHttpServer(StudyService& service, std::optional<std::filesystem::path> static_dir)
    : impl_(std::make_unique<Impl>(service)) {
  auto& srv = impl_->server;
  auto& svc = impl_->service;
  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  srv.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });

  srv.Post("/sessions", impl_->guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    const auto seed = body.contains("seed") ? field<std::uint64_t>(body, "seed") : std::uint64_t{0};
    const Session s = svc.create_session(field<std::string>(body, "tester_id"), field<std::string>(body, "dataset_id"), seed);
    send_json(res,
              {{"session_id", s.session_id}, {"tester_id", s.tester_id}, {"dataset_id", s.dataset_id},
               {"total", s.order.size()}},
              201);
  }));

  srv.Get(R"(/sessions/([^/]+)/next)", impl_->guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    const NextItem n = svc.next_item(req.matches[1]);
    if (n.done) {
      send_json(res, {{"done", true}, {"judged", n.position}, {"total", n.total}});
      return;
    }
    send_json(res, {{"done", false},
                    {"item_id", n.item_id},
                    {"image_url", "/items/" + n.item_id + "/image"},
                    {"scores", {n.left, n.right}},
                    {"judged", n.position},
                    {"total", n.total}});
  }));

  srv.Post(R"(/sessions/([^/]+)/judgments)", impl_->guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    RawChoice raw;
    try {
      raw = parse_raw_choice(field<std::string>(body, "choice"));
    } catch (const std::invalid_argument& e) {
      throw ServiceError("bad_request", 400, e.what());
    }
    const Acknowledgment ack = svc.submit_judgment(req.matches[1], field<std::string>(body, "item_id"), raw);
    send_json(res, {{"accepted", true}, {"judged", ack.judged}, {"total", ack.total}});
  }));

  srv.Get(R"(/datasets/([^/]+)/results)", impl_->guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    const BinnedReport r = svc.results(req.matches[1]);
    if (req.get_param_value("format") == "csv") {
      const std::vector<BinnedReport> one{r};
      res.set_content(report_csv(one), "text/csv");
      return;
    }
    send_json(res, report_json(r));
  }));

  srv.Get(R"(/items/([^/]+)/image)", impl_->guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    const auto path = svc.image_path(req.matches[1]);
    Image img;
    try {
      img = read_pgm(path);
    } catch (const DataError& e) {
      throw ServiceError("unknown_item", 404, e.what());
    }
    res.set_content(encode_png(img), "image/png");
  }));

  if (static_dir) srv.set_mount_point("/", static_dir->string());
}

StudyHttpServer::~StudyHttpServer() = default;

int StudyHttpServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool StudyHttpServer::listen() { return impl_->server.listen_after_bind(); }

void StudyHttpServer::stop() { impl_->server.stop(); }

}  // namespace stedq
