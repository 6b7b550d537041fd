"""Exception taxonomy shared by all bisectfl modules.

Everything raised on purpose derives from BisectFLError so CLI entry
points can catch one type and map it onto the exit-code contract.
Conditions that are part of a normal run (an unresolvable revision, a
corrupt cache file) are *not* exceptions; they surface as Verdict values
or logged warnings instead.
"""

from __future__ import annotations


class BisectFLError(Exception):
    """Base class for all deliberate bisectfl failures."""


# --- history backends ---------------------------------------------------


class BackendUnavailableError(BisectFLError):
    """The requested VCS backend cannot run (missing repo, missing binary)."""


class BackendFailureError(BisectFLError):
    """A VCS subprocess failed; the message carries the captured stderr."""


class UnknownCommitError(BisectFLError):
    """A commit id does not resolve in the repository."""


class NotAncestorError(BisectFLError):
    """good does not precede bad on the first-parent chain."""


class RootCommitError(BisectFLError):
    """Diff requested against the parent of a parentless commit."""


class ManifestParseError(BisectFLError):
    """The release manifest violates its line grammar or its invariants."""


class BadPatternError(BisectFLError):
    """A source-file filter is not a valid regular expression."""


class BadIndexError(BisectFLError):
    """A simulated history was requested with out-of-range indices."""


# --- oracle -------------------------------------------------------------


class ToolchainMissingError(BisectFLError):
    """A resolved compiler handle exists in config but not on disk."""


class BuildFailedError(BisectFLError):
    """A build-on-demand script exited nonzero; message carries the log tail."""


class BinaryNotFoundError(BisectFLError):
    """No prebuilt binary for the revision and no fallback configured."""


# --- bisection engine ---------------------------------------------------


class ConfigParseError(BisectFLError):
    """A case or global config file is malformed or has unknown keys."""


class IntakeFailedError(BisectFLError):
    """The reported bad revision does not fail: nothing to isolate."""


# --- sbfl engine --------------------------------------------------------


class NoFailingRunError(BisectFLError):
    """A spectrum without failing runs cannot localize anything."""


class SpectrumFormatError(BisectFLError):
    """Spectrum or history-stats text violates its line grammar."""


class EmptyFileScoreError(BisectFLError):
    """File aggregation over zero failing-covered statements."""


# --- evaluation harness -------------------------------------------------


class MissingTruthError(BisectFLError):
    """A result references a bug id absent from the ground truth."""


class BugSetMismatchError(BisectFLError):
    """Techniques under comparison cover different bug id sets."""


class NotApplicableError(BisectFLError):
    """A rank-based metric was requested for unordered-set outputs."""
