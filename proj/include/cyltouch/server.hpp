#pragma once

// TCP front end for stream sessions. The first byte of a connection picks the
// protocol: '{' (or whitespace) starts a raw newline-delimited JSON session;
// anything else is read as HTTP, where a WebSocket upgrade carries the same
// JSON messages one per text frame and plain GETs serve the UI directory and
// /patterns.json.

#include <atomic>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "cyltouch/session.hpp"

namespace cyltouch {

namespace net {
namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = boost::beast::http;
namespace websocket = boost::beast::websocket;
using tcp = boost::asio::ip::tcp;
} // namespace net

struct ServerConfig {
    std::string address = "127.0.0.1";
    unsigned short port = 8800; ///< 0 picks a free port
    std::optional<std::filesystem::path> ui_dir;
    json patterns = json::object();
    SessionConfig session{};
    ModelPtr model;
    std::function<void(const std::string&)> log = [](const std::string&) {};
};

namespace detail {

inline std::string mime_type(const std::filesystem::path& p)
{
    const auto ext = p.extension().string();
    if (ext == ".html" || ext == ".htm")
        return "text/html; charset=utf-8";
    if (ext == ".js" || ext == ".mjs")
        return "text/javascript; charset=utf-8";
    if (ext == ".css")
        return "text/css; charset=utf-8";
    if (ext == ".json")
        return "application/json";
    if (ext == ".svg")
        return "image/svg+xml";
    if (ext == ".png")
        return "image/png";
    if (ext == ".wasm")
        return "application/wasm";
    return "application/octet-stream";
}

/// Maps a request target onto a file under root, refusing anything that
/// escapes it.
inline std::optional<std::filesystem::path> resolve_static(const std::filesystem::path& root, std::string target)
{
    if (const auto q = target.find_first_of("?#"); q != std::string::npos)
        target.resize(q);
    if (target.empty() || target.front() != '/')
        return std::nullopt;
    if (target.back() == '/')
        target += "index.html";
    const std::filesystem::path rel = std::filesystem::path(target.substr(1)).lexically_normal();
    if (rel.empty() || rel.is_absolute() || *rel.begin() == "..")
        return std::nullopt;
    auto full = root / rel;
    std::error_code ec;
    if (!std::filesystem::is_regular_file(full, ec))
        return std::nullopt;
    return full;
}

/// Ordered outbound queue with one write in flight.
template <class Derived>
class Outbox {
protected:
    void enqueue(std::string msg)
    {
        queue_.push_back(std::move(msg));
        if (queue_.size() == 1)
            static_cast<Derived*>(this)->write_front();
    }
    void written()
    {
        queue_.pop_front();
        if (!queue_.empty())
            static_cast<Derived*>(this)->write_front();
    }
    std::deque<std::string> queue_;
};

inline std::string next_session_id()
{
    static std::atomic<unsigned long long> counter{0};
    return "s" + std::to_string(++counter);
}

class RawConnection : public std::enable_shared_from_this<RawConnection>, Outbox<RawConnection> {
    friend class Outbox<RawConnection>;

public:
    RawConnection(net::tcp::socket socket, const ServerConfig& cfg) : socket_(std::move(socket)), cfg_(cfg) {}

    void start()
    {
        auto weak = weak_from_this();
        auto ex = socket_.get_executor();
        session_ = std::make_unique<StreamSession>(next_session_id(), cfg_.model, cfg_.session,
                                                   [weak, ex](const json& m) {
                                                       net::asio::post(ex, [weak, line = m.dump() + "\n"]() mutable {
                                                           if (auto self = weak.lock())
                                                               self->enqueue(std::move(line));
                                                       });
                                                   });
        cfg_.log("raw session " + session_->id() + " opened");
        read();
    }

private:
    void read()
    {
        net::asio::async_read_until(socket_, buffer_, '\n',
                                    [self = shared_from_this()](boost::system::error_code ec, std::size_t n) {
                                        if (ec) {
                                            self->cfg_.log("raw session " + self->session_->id() + " closed");
                                            return;
                                        }
                                        std::string line(net::asio::buffers_begin(self->buffer_.data()),
                                                         net::asio::buffers_begin(self->buffer_.data()) +
                                                             static_cast<std::ptrdiff_t>(n));
                                        self->buffer_.consume(n);
                                        self->session_->handle_line(line);
                                        self->read();
                                    });
    }

    void write_front()
    {
        net::asio::async_write(socket_, net::asio::buffer(queue_.front()),
                               [self = shared_from_this()](boost::system::error_code ec, std::size_t) {
                                   if (!ec)
                                       self->written();
                               });
    }

    net::tcp::socket socket_;
    const ServerConfig& cfg_;
    net::asio::streambuf buffer_;
    std::unique_ptr<StreamSession> session_;
};

class WsConnection : public std::enable_shared_from_this<WsConnection>, Outbox<WsConnection> {
    friend class Outbox<WsConnection>;

public:
    WsConnection(net::beast::tcp_stream stream, const ServerConfig& cfg) : ws_(std::move(stream)), cfg_(cfg) {}

    template <class Body, class Allocator>
    void start(net::http::request<Body, net::http::basic_fields<Allocator>> req)
    {
        ws_.set_option(net::websocket::stream_base::timeout::suggested(net::beast::role_type::server));
        ws_.text(true);
        ws_.async_accept(req, [self = shared_from_this()](net::beast::error_code ec) {
            if (ec)
                return;
            auto weak = self->weak_from_this();
            auto ex = self->ws_.get_executor();
            self->session_ = std::make_unique<StreamSession>(
                next_session_id(), self->cfg_.model, self->cfg_.session, [weak, ex](const json& m) {
                    net::asio::post(ex, [weak, text = m.dump()]() mutable {
                        if (auto s = weak.lock())
                            s->enqueue(std::move(text));
                    });
                });
            self->cfg_.log("websocket session " + self->session_->id() + " opened");
            self->read();
        });
    }

private:
    void read()
    {
        ws_.async_read(buffer_, [self = shared_from_this()](net::beast::error_code ec, std::size_t) {
            if (ec) {
                self->cfg_.log("websocket session " + self->session_->id() + " closed");
                return;
            }
            const auto text = net::beast::buffers_to_string(self->buffer_.data());
            self->buffer_.consume(self->buffer_.size());
            std::istringstream lines(text);
            for (std::string line; std::getline(lines, line);)
                self->session_->handle_line(line);
            self->read();
        });
    }

    void write_front()
    {
        ws_.async_write(net::asio::buffer(queue_.front()),
                        [self = shared_from_this()](net::beast::error_code ec, std::size_t) {
                            if (!ec)
                                self->written();
                        });
    }

    net::websocket::stream<net::beast::tcp_stream> ws_;
    const ServerConfig& cfg_;
    net::beast::flat_buffer buffer_;
    std::unique_ptr<StreamSession> session_;
};

class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
public:
    HttpConnection(net::tcp::socket socket, const ServerConfig& cfg) : stream_(std::move(socket)), cfg_(cfg) {}

    void start() { read(); }

private:
    void read()
    {
        req_ = {};
        stream_.expires_after(std::chrono::seconds(30));
        net::http::async_read(stream_, buffer_, req_,
                              [self = shared_from_this()](net::beast::error_code ec, std::size_t) {
                                  if (ec)
                                      return;
                                  self->handle();
                              });
    }

    void handle()
    {
        if (net::websocket::is_upgrade(req_)) {
            stream_.expires_never();
            std::make_shared<WsConnection>(std::move(stream_), cfg_)->start(std::move(req_));
            return;
        }
        auto res = std::make_shared<net::http::response<net::http::string_body>>();
        res->version(req_.version());
        res->keep_alive(req_.keep_alive());
        res->set(net::http::field::server, "cyltouch");
        const std::string target(req_.target());
        if (req_.method() != net::http::verb::get && req_.method() != net::http::verb::head) {
            res->result(net::http::status::method_not_allowed);
            res->set(net::http::field::content_type, "text/plain");
            res->body() = "only GET and HEAD are supported\n";
        } else if (target == "/patterns.json") {
            res->result(net::http::status::ok);
            res->set(net::http::field::content_type, "application/json");
            res->body() = cfg_.patterns.dump(2) + "\n";
        } else if (auto path = cfg_.ui_dir ? resolve_static(*cfg_.ui_dir, target) : std::nullopt) {
            std::ifstream is(*path, std::ios::binary);
            std::ostringstream body;
            body << is.rdbuf();
            res->result(net::http::status::ok);
            res->set(net::http::field::content_type, mime_type(*path));
            res->body() = body.str();
        } else {
            res->result(net::http::status::not_found);
            res->set(net::http::field::content_type, "text/plain");
            res->body() = "not found: " + target + "\n";
        }
        res->prepare_payload();
        if (req_.method() == net::http::verb::head)
            res->body().clear();
        net::http::async_write(stream_, *res,
                               [self = shared_from_this(), res](net::beast::error_code ec, std::size_t) {
                                   if (ec || !res->keep_alive()) {
                                       net::beast::error_code ignored;
                                       self->stream_.socket().shutdown(net::tcp::socket::shutdown_send, ignored);
                                       return;
                                   }
                                   self->read();
                               });
    }

    net::beast::tcp_stream stream_;
    const ServerConfig& cfg_;
    net::beast::flat_buffer buffer_;
    net::http::request<net::http::string_body> req_;
};

} // namespace detail

class StreamServer {
public:
    StreamServer(net::asio::io_context& ioc, ServerConfig cfg)
        : ioc_(ioc), cfg_(std::move(cfg)), acceptor_(net::asio::make_strand(ioc))
    {
        const net::tcp::endpoint ep(net::asio::ip::make_address(cfg_.address), cfg_.port);
        acceptor_.open(ep.protocol());
        acceptor_.set_option(net::asio::socket_base::reuse_address(true));
        acceptor_.bind(ep);
        acceptor_.listen(net::asio::socket_base::max_listen_connections);
    }

    unsigned short port() const { return acceptor_.local_endpoint().port(); }

    void start() { accept(); }

    void stop()
    {
        net::asio::post(acceptor_.get_executor(), [this] {
            boost::system::error_code ignored;
            acceptor_.close(ignored);
        });
    }

private:
    void accept()
    {
        acceptor_.async_accept(net::asio::make_strand(ioc_), [this](boost::system::error_code ec, net::tcp::socket s) {
            if (ec == net::asio::error::operation_aborted || !acceptor_.is_open())
                return;
            if (!ec)
                sniff(std::make_shared<net::tcp::socket>(std::move(s)));
            accept();
        });
    }

    void sniff(std::shared_ptr<net::tcp::socket> socket)
    {
        auto first = std::make_shared<char>(0);
        socket->async_receive(net::asio::buffer(first.get(), 1), net::asio::socket_base::message_peek,
                              [this, socket, first](boost::system::error_code ec, std::size_t n) {
                                  if (ec || n == 0)
                                      return;
                                  const char c = *first;
                                  if (c == '{' || c == ' ' || c == '\n' || c == '\r' || c == '\t')
                                      std::make_shared<detail::RawConnection>(std::move(*socket), cfg_)->start();
                                  else
                                      std::make_shared<detail::HttpConnection>(std::move(*socket), cfg_)->start();
                              });
    }

    net::asio::io_context& ioc_;
    ServerConfig cfg_;
    net::tcp::acceptor acceptor_;
};

} // namespace cyltouch
