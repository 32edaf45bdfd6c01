// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace asopt {

/// Base class for every error thrown by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// densela
struct NonFiniteError : Error { using Error::Error; };
struct NoConvergenceError : Error { using Error::Error; };
struct NotPsdError : Error { using Error::Error; };
struct LayoutMismatchError : Error { using Error::Error; };
struct ShapeMismatchError : Error { using Error::Error; };

// precond
struct StaleUninitializedError : Error { using Error::Error; };

// tierstore
struct CapacityExhaustedError : Error { using Error::Error; };
struct MissingKeyError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct PinnedEntryError : Error { using Error::Error; };
struct DirtyNotPersistedError : Error { using Error::Error; };

// asyncsched
struct WorkerPoolDownError : Error { using Error::Error; };

// simnet / coherence
struct RendezvousTimeoutError : Error { using Error::Error; };
struct GroupFailureError : Error { using Error::Error; };
struct InvalidLayoutError : Error { using Error::Error; };

// harness / metrics
struct ConfigInvalidError : Error { using Error::Error; };
struct EmptyTraceError : Error { using Error::Error; };
struct MissingAnnotationsError : Error { using Error::Error; };
struct NonpositiveRatioError : Error { using Error::Error; };
struct MissingRunsError : Error { using Error::Error; };

/// Thrown when an internal consistency audit fails (CLI exit code 3).
struct AuditError : Error { using Error::Error; };

}  // namespace asopt
