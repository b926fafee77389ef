#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace koopman {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// solver

class CflViolation : public Error {
 public:
  CflViolation(double dt, double limit)
      : Error("CFL violation: dt = " + std::to_string(dt) +
              " s exceeds stability limit " + std::to_string(limit) + " s"),
        dt_(dt),
        limit_(limit) {}
  double dt() const { return dt_; }
  double limit() const { return limit_; }

 private:
  double dt_;
  double limit_;
};

class NonPositiveDepth : public Error {
 public:
  NonPositiveDepth(std::size_t iy, std::size_t ix, double h)
      : Error("non-positive depth h = " + std::to_string(h) + " at (iy=" +
              std::to_string(iy) + ", ix=" + std::to_string(ix) + ")") {}
};

/// Wraps a step failure with the simulation time at which it happened.
class SimulationFailure : public Error {
 public:
  SimulationFailure(double time, const std::string& what, bool cfl)
      : Error("simulation failed at t = " + std::to_string(time) + " s: " + what),
        time_(time),
        cfl_(cfl) {}
  double time() const { return time_; }
  bool is_cfl_violation() const { return cfl_; }

 private:
  double time_;
  bool cfl_;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// data / io

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class TooFewColumns : public Error {
 public:
  using Error::Error;
};

class IndexOutOfRange : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class BadMagic : public IoError {
 public:
  using IoError::IoError;
};

class UnsupportedVersion : public IoError {
 public:
  using IoError::IoError;
};

class CorruptHeader : public IoError {
 public:
  using IoError::IoError;
};

// ---------------------------------------------------------------------------
// decomposition

class RankDeficient : public Error {
 public:
  RankDeficient(const std::string& what, std::size_t rank, std::size_t required)
      : Error(what + ": numerical rank " + std::to_string(rank) + " < " +
              std::to_string(required) +
              "; consider truncating the snapshot window to at most " +
              std::to_string(rank + 1) + " snapshots"),
        rank_(rank),
        required_(required) {}
  std::size_t rank() const { return rank_; }
  std::size_t required() const { return required_; }

 private:
  std::size_t rank_;
  std::size_t required_;
};

class EigenFailure : public Error {
 public:
  using Error::Error;
};

class ZeroNormData : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// configuration

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class UnknownKey : public ParseError {
 public:
  UnknownKey(std::size_t line, const std::string& key)
      : ParseError(line, "unknown key '" + key + "'") {}
};

class InvalidValue : public ParseError {
 public:
  using ParseError::ParseError;
};

}  // namespace koopman
