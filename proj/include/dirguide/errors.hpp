#pragma once

#include <stdexcept>
#include <string>

namespace dirguide {

/// Base class of every error raised by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// ingest
class MalformedManifest : public Error { public: using Error::Error; };
class MissingImage      : public Error { public: using Error::Error; };
class DuplicateId       : public Error { public: using Error::Error; };
class BoundsViolation   : public Error { public: using Error::Error; };
class DegeneratePolygon : public Error { public: using Error::Error; };
class InsufficientPool  : public Error { public: using Error::Error; };

// perturb / image
class EmptyCrop   : public Error { public: using Error::Error; };
class EmptyRange  : public Error { public: using Error::Error; };
class DecodeError : public Error { public: using Error::Error; };
class WriteError  : public Error { public: using Error::Error; };

// oracle
class TransportError : public Error { public: using Error::Error; };
class AuthMissing    : public Error { public: using Error::Error; };
class OracleRefusal  : public Error { public: using Error::Error; };

/// Violated precondition on an operation argument.
class InvalidArgument : public Error { public: using Error::Error; };

}  // namespace dirguide
