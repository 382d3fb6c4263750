"""Exception hierarchy.

Each family carries the process exit code the CLI uses when the error
escapes a command.
"""

from __future__ import annotations


class ScenforgeError(Exception):
    exit_code = 1


# -- input / io ---------------------------------------------------------------

class IoError(ScenforgeError):
    exit_code = 2


# -- map ----------------------------------------------------------------------

class MapError(ScenforgeError):
    exit_code = 3


class MalformedDocument(MapError):
    pass


class UnsupportedFeature(MapError):
    pass


class DanglingReference(MapError):
    pass


class OutOfRange(MapError):
    pass


class UnknownLane(MapError):
    pass


class UnknownSegment(MapError):
    pass


# -- schema -------------------------------------------------------------------

class SchemaError(ScenforgeError):
    exit_code = 4


class CatalogParseError(SchemaError):
    pass


class InvariantViolation(SchemaError):
    pass


class UnknownAttribute(SchemaError):
    pass


# -- extraction ---------------------------------------------------------------

class ExtractionError(ScenforgeError):
    exit_code = 5


class BackendError(ExtractionError):
    exit_code = 6


class IncompleteReport(ExtractionError):
    pass


class UnknownAction(ExtractionError):
    pass


class AmbiguousPosition(ExtractionError):
    pass


# -- placement / generation ---------------------------------------------------

class PlacementError(ScenforgeError):
    exit_code = 7


class NoCandidate(PlacementError):
    pass


class InfeasibleAssignment(PlacementError):
    pass


class GenerationError(ScenforgeError):
    exit_code = 8


class FragmentInvalid(GenerationError):
    def __init__(self, slot: str, findings):
        self.slot = slot
        self.findings = list(findings)
        detail = "; ".join(str(f) for f in self.findings) or "malformed fragment"
        super().__init__(f"fragment for slot {slot!r} is invalid: {detail}")


# -- mutation / assembly ------------------------------------------------------

class MutationError(ScenforgeError):
    exit_code = 9


class DomainExhausted(MutationError):
    pass


class OperatorKindMismatch(MutationError):
    pass


class AssemblyError(ScenforgeError):
    exit_code = 10


class InvalidOrder(AssemblyError):
    pass


class SlotConflict(AssemblyError):
    pass


# -- oracle -------------------------------------------------------------------

class OracleError(ScenforgeError):
    exit_code = 11


class TooFewSamples(OracleError):
    pass


class NonMonotonicTime(OracleError):
    pass


class MissingGoal(OracleError):
    pass


class DegenerateDistribution(OracleError):
    pass
