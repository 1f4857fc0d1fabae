#include <thread>

#include <httplib.h>

#include "simeval/anneval.hpp"

namespace simeval {

struct AnnevalHttpServer::Impl {
    AnnevalService& service;
    httplib::Server server;
    std::thread thread;

    explicit Impl(AnnevalService& s) : service(s) {
        auto route = [this](const httplib::Request& req, httplib::Response& res) {
            auto reply = service.handle(req.method, req.path, req.get_header_value("Authorization"), req.body);
            res.status = reply.status;
            res.set_content(reply.body.dump(), "application/json");
        };
        server.Get("/session", route);
        server.Get("/task/next", route);
        server.Get("/agreement", route);
        server.Post("/label", route);
    }
};

AnnevalHttpServer::AnnevalHttpServer(AnnevalService& service) : impl_(std::make_unique<Impl>(service)) {}

AnnevalHttpServer::~AnnevalHttpServer() { stop(); }

int AnnevalHttpServer::start(const std::string& host, int port) {
    int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return bound;
}

void AnnevalHttpServer::listen(const std::string& host, int port) {
    if (!impl_->server.listen(host, port)) throw IoError("cannot listen on " + host + ":" + std::to_string(port));
}

void AnnevalHttpServer::stop() {
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace simeval
