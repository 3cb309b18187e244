from typing import Optional

from ..history import Recorder
from .base import LockSet, Protocol, ProtocolKind, StmConfig
from .ksftm import Ksftm
from .pkto import Pkto, Sfkv
from .svsftm import SvObject, SvSftm

_CLASSES = {
    ProtocolKind.KSFTM: Ksftm,
    ProtocolKind.PKTO: Pkto,
    ProtocolKind.SFKV: Sfkv,
    ProtocolKind.SVSFTM: SvSftm,
}


def make_protocol(kind, n_objects: int, config: Optional[StmConfig] = None,
                  recorder: Optional[Recorder] = None) -> Protocol:
    """Instantiate a protocol by kind or name (``"ksftm"``, ``"pkto"``, ...)."""
    return _CLASSES[ProtocolKind.parse(kind)](n_objects, config, recorder)


__all__ = ["Ksftm", "LockSet", "Pkto", "Protocol", "ProtocolKind", "Sfkv",
           "StmConfig", "SvObject", "SvSftm", "make_protocol"]
