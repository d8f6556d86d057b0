#include "tpmkex/transport.hpp"

#include <condition_variable>
#include <deque>
#include <mutex>

namespace tpmkex {

namespace {

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_be32(const std::uint8_t* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) |
           (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) |
           static_cast<std::uint32_t>(p[3]);
}

bool known_type(std::uint8_t t) {
    switch (static_cast<FrameType>(t)) {
        case FrameType::bit_package:
        case FrameType::bp_ack:
        case FrameType::req_key:
        case FrameType::key_cha:
        case FrameType::key_com:
        case FrameType::sync_error:
        case FrameType::hello:
            return true;
    }
    return false;
}

}  // namespace

std::uint32_t crc32(std::span<const std::uint8_t> data) {
    std::uint32_t crc = 0xFFFFFFFFu;
    for (std::uint8_t byte : data) {
        crc ^= static_cast<std::uint32_t>(byte) << 24;
        for (int i = 0; i < 8; ++i) {
            if (crc & 0x80000000u)
                crc = (crc << 1) ^ 0x04C11DB7u;
            else
                crc <<= 1;
        }
    }
    return crc ^ 0xFFFFFFFFu;
}

std::vector<std::uint8_t> encode_frame(const Frame& frame) {
    if (frame.payload.size() > max_payload_bytes)
        throw FramingError("payload too long: " +
                           std::to_string(frame.payload.size()));
    std::vector<std::uint8_t> out;
    out.reserve(frame_overhead_bytes + frame.payload.size());
    out.push_back(static_cast<std::uint8_t>(frame.type));
    put_be32(out, frame.seq);
    out.push_back(static_cast<std::uint8_t>(frame.payload.size() >> 8));
    out.push_back(static_cast<std::uint8_t>(frame.payload.size()));
    out.insert(out.end(), frame.payload.begin(), frame.payload.end());
    put_be32(out, crc32(out));
    return out;
}

Frame decode_frame(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < frame_overhead_bytes)
        throw FramingError("truncated frame: " + std::to_string(bytes.size()) +
                           " bytes");
    const std::size_t len =
        (static_cast<std::size_t>(bytes[5]) << 8) | bytes[6];
    if (len > max_payload_bytes)
        throw FramingError("payload length out of range: " +
                           std::to_string(len));
    if (bytes.size() != frame_overhead_bytes + len)
        throw FramingError("frame length mismatch");
    const std::uint32_t want = get_be32(bytes.data() + 7 + len);
    const std::uint32_t got = crc32(bytes.first(7 + len));
    if (want != got) throw IntegrityError("frame check failed");
    if (!known_type(bytes[0]))
        throw ProtocolError("unknown frame type: " + std::to_string(bytes[0]));
    Frame f;
    f.type = static_cast<FrameType>(bytes[0]);
    f.seq = get_be32(bytes.data() + 1);
    f.payload.assign(bytes.begin() + 7, bytes.begin() + 7 + len);
    return f;
}

namespace {

// One direction of a loopback pair: a FIFO of encoded frames.
struct LoopbackQueue {
    std::mutex m;
    std::condition_variable cv;
    std::deque<std::vector<std::uint8_t>> frames;
    bool closed = false;

    void push(std::vector<std::uint8_t> bytes) {
        {
            std::lock_guard lock(m);
            if (closed) throw TransportError("send on closed channel");
            frames.push_back(std::move(bytes));
        }
        cv.notify_one();
    }

    std::vector<std::uint8_t> pop() {
        std::unique_lock lock(m);
        cv.wait(lock, [&] { return !frames.empty() || closed; });
        if (frames.empty()) throw ChannelClosed("peer closed the channel");
        auto bytes = std::move(frames.front());
        frames.pop_front();
        return bytes;
    }

    void close() {
        {
            std::lock_guard lock(m);
            closed = true;
        }
        cv.notify_all();
    }
};

class LoopbackChannel : public Channel {
public:
    LoopbackChannel(std::shared_ptr<LoopbackQueue> out,
                    std::shared_ptr<LoopbackQueue> in)
        : out_(std::move(out)), in_(std::move(in)) {}

    ~LoopbackChannel() override { close(); }

    void send(const Frame& frame) override { out_->push(encode_frame(frame)); }

    Frame receive() override {
        const auto bytes = in_->pop();
        return decode_frame(bytes);
    }

    void close() override {
        out_->close();
        in_->close();
    }

private:
    std::shared_ptr<LoopbackQueue> out_;
    std::shared_ptr<LoopbackQueue> in_;
};

}  // namespace

std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> loopback_pair() {
    auto ab = std::make_shared<LoopbackQueue>();
    auto ba = std::make_shared<LoopbackQueue>();
    return {std::make_unique<LoopbackChannel>(ab, ba),
            std::make_unique<LoopbackChannel>(ba, ab)};
}

}  // namespace tpmkex
