#include "tpmkex/session.hpp"

#include <utility>

namespace tpmkex {

namespace {

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_be32(std::span<const std::uint8_t> p) {
    if (p.size() < 4) throw ProtocolError("payload too short");
    return (static_cast<std::uint32_t>(p[0]) << 24) |
           (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) |
           static_cast<std::uint32_t>(p[3]);
}

std::vector<std::uint8_t> be32_payload(std::uint32_t v) {
    std::vector<std::uint8_t> p;
    put_be32(p, v);
    return p;
}

}  // namespace

Session::Session(const TpmParams& params, std::uint32_t input_seed,
                 std::uint32_t weight_seed, SessionMode mode)
    : params_(params),
      mode_(mode),
      input_gen_(input_seed),
      weight_rng_(weight_seed) {
    params_.validate();
    weights_ = init_weights(weight_rng_, params_);
}

BitPackage Session::produce_package() {
    if (phase_ != Phase::Idle && phase_ != Phase::Generating &&
        phase_ != Phase::Synchronized)
        throw ProtocolError("produce_package called in wrong phase");
    const int b = params_.package_bits;
    BitPackage pkg;
    pkg.count = b;
    pkg.seq = packages_produced_;
    pkg.bits.assign((b + 7) / 8, 0);
    pending_.clear();
    pending_.reserve(b);
    for (int i = 0; i < b; ++i) {
        InputVector input = input_gen_.next_input(params_.hidden_units,
                                                  params_.inputs_per_unit);
        Evaluation eval = evaluate(weights_, input, params_.role);
        pkg.set_bit(i, eval.output);
        pending_.push_back({std::move(input), std::move(eval)});
    }
    ++packages_produced_;
    phase_ = Phase::AwaitingPeer;
    return pkg;
}

Phase Session::absorb_package(const BitPackage& peer) {
    if (phase_ != Phase::AwaitingPeer)
        throw ProtocolError("absorb_package called in wrong phase");
    if (peer.seq != packages_absorbed_)
        throw ProtocolError("package sequence gap: expected " +
                            std::to_string(packages_absorbed_) + ", got " +
                            std::to_string(peer.seq));
    if (peer.count != params_.package_bits ||
        peer.bits.size() !=
            static_cast<std::size_t>((params_.package_bits + 7) / 8))
        throw ProtocolError("bit package size mismatch");

    phase_ = Phase::Learning;
    const std::int64_t watchdog = params_.effective_watchdog();
    bool reset_pending = false;
    bool failed = false;
    for (int i = 0; i < peer.count; ++i) {
        const PendingEntry& entry = pending_[i];
        const int own = entry.eval.output;
        const int theirs = peer.bit(i);
        if (own == theirs) {
            if (agree_count_ < params_.sync_window) ++agree_count_;
        } else {
            agree_count_ = 0;
        }
        // Stored-state replay: the hidden signs recorded at production time
        // drive the update even though the weights have moved since.
        hebbian_update(weights_, entry.input, entry.eval, theirs, params_);
        ++iterations_;
        if (observer_) observer_(iterations_, weights_);
        if (agree_count_ >= params_.sync_window && !synchronized_) {
            if (!detected_sync_) detected_sync_ = iterations_;
            key_queue_.push_back(extract_key(weights_, params_));
            if (mode_ == SessionMode::SingleKey) {
                synchronized_ = true;
            } else {
                agree_count_ = 0;  // the next key needs a fresh window
                if (mode_ == SessionMode::ContinuousFullReset)
                    reset_pending = true;
            }
        }
        if (!detected_sync_ && iterations_ >= watchdog) {
            failed = true;
            break;
        }
    }
    pending_.clear();
    ++packages_absorbed_;
    if (failed) {
        phase_ = Phase::Failed;
    } else {
        if (reset_pending) weights_ = init_weights(weight_rng_, params_);
        phase_ = synchronized_ ? Phase::Synchronized : Phase::Generating;
    }
    return phase_;
}

std::optional<KeyMaterial> Session::pop_key() {
    if (key_queue_.empty()) return std::nullopt;
    KeyMaterial key = std::move(key_queue_.front());
    key_queue_.pop_front();
    return key;
}

SimulationDriver::SimulationDriver(const ExchangeConfig& config)
    : a_(config.params.with_role(Role::A), config.input_seed,
         config.weight_seed_a, config.mode),
      b_(config.params.with_role(Role::B), config.input_seed,
         config.weight_seed_b, config.mode),
      key_target_(config.key_target),
      snapshots_(static_cast<std::size_t>(config.params.package_bits)) {
    const int b = config.params.package_bits;
    a_.set_iteration_observer(
        [this, b](std::int64_t iter, const WeightMatrix& w) {
            if (recording_) snapshots_[(iter - 1) % b] = w;
        });
    b_.set_iteration_observer(
        [this, b](std::int64_t iter, const WeightMatrix& w) {
            if (recording_ && !oracle_sync_ && w == snapshots_[(iter - 1) % b])
                oracle_sync_ = iter;
        });
}

bool SimulationDriver::step_round() {
    if (a_.phase() == Phase::Failed || b_.phase() == Phase::Failed)
        return false;
    const BitPackage from_a = a_.produce_package();
    const BitPackage from_b = b_.produce_package();
    const std::int64_t first_iteration = a_.iterations() + 1;
    a_.absorb_package(from_b);
    b_.absorb_package(from_a);
    ++rounds_;
    if (tap_) {
        const RoundView view{from_a, from_b, first_iteration,
                             recording_ ? std::span<const WeightMatrix>(snapshots_)
                                        : std::span<const WeightMatrix>(),
                             oracle_sync_};
        tap_->on_round(view);
    }
    recording_ = tap_ != nullptr || !oracle_sync_;
    return a_.phase() != Phase::Failed && b_.phase() != Phase::Failed;
}

ExchangeResult SimulationDriver::run() {
    ExchangeResult result;
    for (;;) {
        const bool ok = step_round();
        while (auto key = a_.pop_key()) result.keys_a.push_back(std::move(*key));
        while (auto key = b_.pop_key()) result.keys_b.push_back(std::move(*key));
        if (!ok) {
            result.failed = true;
            break;
        }
        if (a_.phase() == Phase::Synchronized &&
            b_.phase() == Phase::Synchronized)
            break;  // single-key sessions latch here
        if (static_cast<int>(result.keys_a.size()) >= key_target_ &&
            static_cast<int>(result.keys_b.size()) >= key_target_)
            break;
    }
    if (a_.detected_sync_iteration() != b_.detected_sync_iteration())
        throw Error("internal: parties disagree on the detection time");
    result.oracle_sync = oracle_sync_;
    result.detected_sync = a_.detected_sync_iteration();
    result.iterations = a_.iterations();
    result.packages_per_direction = rounds_;
    return result;
}

ExchangeResult run_key_exchange(const ExchangeConfig& config) {
    SimulationDriver driver(config);
    return driver.run();
}

RekeyService::RekeyService(Session& session, std::function<bool()> pump)
    : session_(session), pump_(std::move(pump)) {}

void RekeyService::step(Channel& port) {
    Frame f = port.receive();
    if (f.seq != recv_seq_++)
        throw ProtocolError("frame sequence gap on consumer port");
    switch (state_) {
        case State::AwaitingRequest: {
            if (f.type != FrameType::req_key)
                throw ProtocolError("expected REQ_KEY");
            while (session_.key_queue().empty()) {
                if (session_.phase() == Phase::Failed || !pump_()) {
                    port.send(Frame{FrameType::sync_error, send_seq_++,
                                    be32_payload(static_cast<std::uint32_t>(
                                        session_.iterations()))});
                    throw SyncError("no key available: synchronization failed",
                                    session_.iterations());
                }
            }
            offered_ = session_.pop_key();
            port.send(Frame{FrameType::key_cha, send_seq_++,
                            be32_payload(next_key_id_)});
            state_ = State::AwaitingCommit;
            break;
        }
        case State::AwaitingCommit: {
            if (f.type != FrameType::key_com)
                throw ProtocolError("expected KEY_COM");
            if (get_be32(f.payload) != next_key_id_)
                throw ProtocolError("key commit for unknown key id");
            granted_.push_back(std::move(*offered_));
            offered_.reset();
            ++next_key_id_;
            state_ = State::AwaitingRequest;
            break;
        }
    }
}

void RekeyClient::request(Channel& port) {
    port.send(Frame{FrameType::req_key, send_seq_++, {}});
}

std::uint32_t RekeyClient::await_grant(Channel& port) {
    Frame f = port.receive();
    if (f.seq != recv_seq_++)
        throw ProtocolError("frame sequence gap on consumer port");
    if (f.type == FrameType::sync_error)
        throw SyncError("service reported a synchronization error",
                        get_be32(f.payload));
    if (f.type != FrameType::key_cha) throw ProtocolError("expected KEY_CHA");
    return get_be32(f.payload);
}

void RekeyClient::commit(Channel& port, std::uint32_t key_id) {
    port.send(Frame{FrameType::key_com, send_seq_++, be32_payload(key_id)});
}

namespace {

struct Hello {
    Role role;
    std::optional<std::uint32_t> seed;
};

std::vector<std::uint8_t> encode_hello(const Hello& h) {
    std::vector<std::uint8_t> p;
    p.push_back(h.role == Role::A ? 0 : 1);
    p.push_back(h.seed ? 1 : 0);
    if (h.seed) put_be32(p, *h.seed);
    return p;
}

Hello decode_hello(std::span<const std::uint8_t> payload) {
    if (payload.size() < 2) throw ProtocolError("malformed HELLO");
    if (payload[0] > 1) throw ProtocolError("malformed HELLO role");
    Hello h{payload[0] == 0 ? Role::A : Role::B, std::nullopt};
    if (payload[1] & 1) {
        if (payload.size() != 6) throw ProtocolError("malformed HELLO");
        h.seed = get_be32(payload.subspan(2));
    } else if (payload.size() != 2) {
        throw ProtocolError("malformed HELLO");
    }
    return h;
}

// Per-direction frame sequence bookkeeping over a raw channel.
class FramedPort {
public:
    explicit FramedPort(Channel& channel) : channel_(channel) {}

    void send(FrameType type, std::vector<std::uint8_t> payload) {
        channel_.send(Frame{type, send_seq_++, std::move(payload)});
    }

    Frame receive() {
        Frame f = channel_.receive();
        if (f.seq != recv_seq_++) throw ProtocolError("frame sequence gap");
        return f;
    }

    Frame expect(FrameType type) {
        Frame f = receive();
        if (f.type == FrameType::sync_error)
            throw SyncError("peer reported a synchronization error",
                            get_be32(f.payload));
        if (f.type != type) throw ProtocolError("unexpected frame type");
        return f;
    }

private:
    Channel& channel_;
    std::uint32_t send_seq_ = 0;
    std::uint32_t recv_seq_ = 0;
};

}  // namespace

PartyOutcome run_party(const PartyConfig& config, Channel& channel) {
    config.params.validate();
    FramedPort port(channel);
    const Role role = config.connector ? Role::A : Role::B;
    std::optional<std::uint32_t> input_seed = config.input_seed;

    if (config.connector) {
        if (!input_seed)
            throw ConfigError("the connecting side needs an input seed");
        port.send(FrameType::hello,
                  encode_hello({role, config.authenticated
                                          ? std::nullopt
                                          : std::optional(*input_seed)}));
        const Hello peer = decode_hello(port.expect(FrameType::hello).payload);
        if (peer.role != Role::B)
            throw ProtocolError("peer did not take the listening role");
        if (peer.seed) throw ProtocolError("unexpected seed from listener");
    } else {
        const Hello peer = decode_hello(port.expect(FrameType::hello).payload);
        if (peer.role != Role::A)
            throw ProtocolError("peer did not take the connecting role");
        if (config.authenticated) {
            if (peer.seed)
                throw ProtocolError(
                    "peer sent an input seed on an authenticated exchange");
            if (!input_seed)
                throw ConfigError(
                    "authenticated mode requires a pre-shared input seed");
        } else {
            if (!peer.seed) throw ProtocolError("missing input seed in HELLO");
            input_seed = peer.seed;
        }
        port.send(FrameType::hello, encode_hello({Role::B, std::nullopt}));
    }

    const SessionMode mode =
        config.key_target > 1
            ? (config.full_reset ? SessionMode::ContinuousFullReset
                                 : SessionMode::Continuous)
            : SessionMode::SingleKey;
    Session session(config.params.with_role(role), *input_seed,
                    config.weight_seed, mode);

    PartyOutcome out;
    const std::size_t payload_bytes =
        static_cast<std::size_t>((config.params.package_bits + 7) / 8);
    while (static_cast<int>(out.keys.size()) < config.key_target) {
        const BitPackage mine = session.produce_package();
        port.send(FrameType::bit_package, mine.bits);
        const Frame peer_frame = port.expect(FrameType::bit_package);
        if (peer_frame.payload.size() != payload_bytes)
            throw ProtocolError("bit package size mismatch");
        port.send(FrameType::bp_ack, {});
        port.expect(FrameType::bp_ack);
        const BitPackage theirs{peer_frame.payload, config.params.package_bits,
                                session.packages_absorbed()};
        const Phase phase = session.absorb_package(theirs);
        while (auto key = session.pop_key()) out.keys.push_back(std::move(*key));
        if (phase == Phase::Failed) {
            try {
                port.send(FrameType::sync_error,
                          be32_payload(
                              static_cast<std::uint32_t>(session.iterations())));
            } catch (const Error&) {
                // the peer may already be gone; the local error wins
            }
            throw SyncError("synchronization watchdog expired",
                            session.iterations());
        }
    }
    out.detected_sync = session.detected_sync_iteration();
    out.iterations = session.iterations();
    out.packages = session.packages_produced();
    return out;
}

}  // namespace tpmkex
