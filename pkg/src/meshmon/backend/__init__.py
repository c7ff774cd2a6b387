"""Backend: duplicate-free storage, identity merge, views, auth, HTTP API."""

from .api import ACCESS_MATRIX, create_app  # noqa: F401
from .service import (  # noqa: F401
    BackendService,
    BadWindow,
    LockedByWarning,
    NodeRecord,
    TrafficEdge,
    Unauthorized,
    UnknownNode,
    UnknownWarning,
    Warning,
)
from .store import Store  # noqa: F401
