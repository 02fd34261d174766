#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace ruta {

enum class Errc {
    // wire codec
    BadMagic,
    TruncatedHeader,
    TruncatedPayload,
    LengthMismatch,
    UnsupportedSlocType,
    UnsupportedProtocol,
    InvalidFlowIdType,
    InvariantViolation,
    NoSegmentsLeft,
    UnknownOamType,
    UnknownOamSubtype,
    // k-v store
    InvalidKey,
    LeaseExpired,
    LeaseNotFound,
    StoreUnavailable,
    CompactedRevision,
    LockAbandoned,
    ReentrantLock,
    // control schema
    LabelSpaceExhausted,
    DuplicateSystemName,
    NotRegistered,
    MalformedRoute,
    MalformedValue,
    OutOfRange,
    // measurement
    MalformedOam,
    EmptyWindow,
    Timeout,
    // path computation
    NoRoute,
    NoProbeData,
    NoFeasiblePath,
    TooManySegments,
    // forwarding
    PolicyDeny,
    UnknownFunction,
    NoL2Entry,
    NoVrfRoute,
    // simulator
    LinkDown,
    NoMapping,
    // tooling
    ParseError,
    SchemaError,
    SnapshotMissing,
};

const char* to_string(Errc code) noexcept;

/// Error carrying a machine-readable code. Decoder errors also carry the
/// octet offset at which decoding stopped.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what, std::optional<std::size_t> offset = std::nullopt);

    Errc code() const noexcept { return code_; }
    std::optional<std::size_t> offset() const noexcept { return offset_; }

private:
    Errc code_;
    std::optional<std::size_t> offset_;
};

} // namespace ruta
