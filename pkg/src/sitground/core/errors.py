# File Name: errors.py
# Created By: ZW
# Created On: 2023-03-02
# Purpose: defines the exception hierarchy raised across sitground. the cli
#  maps ValidationError to exit code 2 and FormatError to exit code 3.

# class definitions
# ----------------------------------------------------------------------------

# base class for every error raised on purpose by the package
class SitgroundError(Exception):
    pass


# inputs that break a documented contract (bad values, missing categories..)
class ValidationError(SitgroundError, ValueError):
    pass


class BoxError(ValidationError):
    pass


class ModelError(ValidationError):
    pass


# raised when the observed covariance block cannot be factorized
class ConditioningError(ModelError):
    pass


# raised for a singular ridge system (rank-deficient design at lambda=0)
class RidgeError(ModelError):
    pass


class ConfigError(ValidationError):
    pass


class AnnotationError(ValidationError):
    pass


class SynthSpecError(ValidationError):
    pass


# files that cannot be parsed, are truncated, or carry the wrong header
class FormatError(SitgroundError, IOError):
    pass


class FeatureStoreFormatError(FormatError):
    pass


# lookups for images or keys that are not present
class LookupMissError(SitgroundError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""
