#pragma once

#include <stdexcept>
#include <string>

namespace direid {

// Every failure surfaced by the library derives from Error so callers (the CLI
// in particular) can report a diagnostic and exit nonzero.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IngestError : Error { using Error::Error; };       // manifest / image input
struct IoError : Error { using Error::Error; };           // writing outputs
struct ParameterError : Error { using Error::Error; };    // invalid numeric argument
struct ShapeError : Error { using Error::Error; };        // tensor geometry mismatch
struct ProtocolError : Error { using Error::Error; };     // retrieval split / metric protocol
struct StateError : Error { using Error::Error; };        // missing checkpoint, bad stage order
struct CompositionError : Error { using Error::Error; };  // loss terms vs. phase
struct SamplerError : Error { using Error::Error; };      // infeasible batch composition
struct ConfigError : Error { using Error::Error; };       // unknown key, bad value

}  // namespace direid
