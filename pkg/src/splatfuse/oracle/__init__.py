"""Restoration oracles: the boundary standing in for a generative video model."""

from .align import align_depth, select_reference
from .base import (CountingOracle, GroundTruthOracle, IdentityOracle, Oracle, OracleRequest,
                   OracleResponse)
from .remote import RemoteOracle
from .server import serve_mock
from .wire import PROTOCOL
