// Error taxonomy for the key-exchange stack.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace tpmkex {

/// Base class for all errors raised by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Invalid parameters, seeds or experiment configuration.
struct ConfigError : Error {
    using Error::Error;
};

/// Operands whose (K, N) shapes do not agree.
struct DimensionError : Error {
    using Error::Error;
};

/// Short or malformed byte sequence at the framing layer.
struct FramingError : Error {
    using Error::Error;
};

/// Frame check sequence mismatch.
struct IntegrityError : Error {
    using Error::Error;
};

/// Well-formed bytes that violate the protocol: unknown frame type,
/// sequence gap, message in the wrong state, unknown key id.
struct ProtocolError : Error {
    using Error::Error;
};

/// Socket-level or channel-lifecycle failure.
struct TransportError : Error {
    using Error::Error;
};

/// Orderly end of a channel: the peer closed it.
struct ChannelClosed : TransportError {
    using TransportError::TransportError;
};

/// Watchdog expiry: the session gave up before synchronizing.
struct SyncError : Error {
    SyncError(const std::string& what, std::int64_t iterations)
        : Error(what), iterations(iterations) {}
    std::int64_t iterations;
};

}  // namespace tpmkex
