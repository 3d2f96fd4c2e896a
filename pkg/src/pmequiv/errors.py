"""Exception types raised across the package."""


class PmequivError(Exception):
    """Base class for all package errors."""


class NonManifold(PmequivError):
    pass


class DegenerateCell(PmequivError):
    pass


class Unsupported(PmequivError):
    pass


class DegreeUnavailable(PmequivError):
    pass


class SingularMass(PmequivError):
    pass


class SingularDoFMap(PmequivError):
    pass


class RankDeficient(PmequivError):
    pass


class SolverFailure(PmequivError):
    pass


class SingularSystem(PmequivError):
    pass


class UnsupportedCompanion(PmequivError):
    pass


class SchemaError(PmequivError):
    """Input file does not match the expected JSON layout."""


class DimensionMismatch(PmequivError):
    """Inputs refer to incompatible meshes or dimensions."""
