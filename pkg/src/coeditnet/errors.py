"""Exception hierarchy. The CLI maps the two top-level families to exit codes."""


class CoeditError(Exception):
    pass


class RepositoryError(CoeditError):
    """Problems reading the git repository (CLI exit code 2)."""


class NotARepository(RepositoryError):
    pass


class EmptyRepository(RepositoryError):
    pass


class CommitNotFound(RepositoryError):
    pass


class FileNotAtRevision(RepositoryError):
    pass


class BinaryFile(RepositoryError):
    pass


class MalformedDiff(RepositoryError):
    pass


class GitCommandError(RepositoryError):
    pass


class MissingBlameEntry(CoeditError):
    """A deleted line has no blame entry, i.e. diff and blame disagree."""


class StoreError(CoeditError):
    """Problems with the co-edit database (CLI exit code 3)."""


class ModeMismatch(StoreError):
    pass


class DuplicateCommit(StoreError):
    pass


class StoreLocked(StoreError):
    pass


class IoFailure(StoreError):
    pass


class InvalidWindow(CoeditError, ValueError):
    pass


class PathNotFound(CoeditError):
    pass
