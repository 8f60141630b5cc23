"""
Artifact Store Service
Versioned binary containers for keys, ciphertexts, encrypted scores and encrypted models
"""

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from models.crypto_models import EncryptionParams
from services.encrypted_inference import EncryptedModel, EncryptedScore
from services.fvrns import Ciphertext, EvaluationKeys, OpCounters, PublicKey, SecretKey
from services.polyring import PolyRingError, RnsPoly, deserialize_poly, serialize_poly

logger = logging.getLogger(__name__)

ARTIFACT_MAGIC = b"PVCA"
ARTIFACT_VERSION = 1
_PREAMBLE = struct.Struct("<4sHI")

KIND_SECRET_KEY = "secret-key"
KIND_PUBLIC_KEY = "public-key"
KIND_EVALUATION_KEYS = "evaluation-keys"
KIND_CIPHERTEXTS = "ciphertexts"
KIND_SCORE = "encrypted-score"
KIND_ENCRYPTED_MODEL = "encrypted-model"

SECRET_KEY_FILE = "secret.key"
PUBLIC_KEY_FILE = "public.key"
EVALUATION_KEYS_FILE = "evaluation.key"


@dataclass
class Artifact:
    """Decoded container: header fields plus the polynomial payload in file order"""
    kind: str
    params: Optional[EncryptionParams]
    manifest_digest: Optional[str]
    meta: Dict[str, object] = field(default_factory=dict)
    polys: List[RnsPoly] = field(default_factory=list)

    @property
    def params_digest(self) -> Optional[str]:
        return self.params.digest() if self.params is not None else None


def encode_artifact(artifact: Artifact) -> bytes:
    header = {
        "kind": artifact.kind,
        "params": artifact.params.model_dump(mode="json") if artifact.params is not None else None,
        "params_digest": artifact.params_digest,
        "manifest_digest": artifact.manifest_digest,
        "meta": artifact.meta,
        "poly_count": len(artifact.polys),
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [_PREAMBLE.pack(ARTIFACT_MAGIC, ARTIFACT_VERSION, len(header_bytes)), header_bytes]
    parts.extend(serialize_poly(p) for p in artifact.polys)
    return b"".join(parts)


def decode_artifact(data: bytes) -> Artifact:
    """
    Parse a container, verifying magic, version and stored parameter digest

    Args:
        data: Raw container bytes

    Returns:
        Artifact with its polynomials
    """
    try:
        magic, version, header_length = _PREAMBLE.unpack_from(data, 0)
    except struct.error as e:
        raise ArtifactFormatError(f"Truncated artifact preamble: {str(e)}")
    if magic != ARTIFACT_MAGIC:
        raise ArtifactFormatError(f"Not an artifact file (magic {magic!r})")
    if version != ARTIFACT_VERSION:
        raise ArtifactFormatError(f"Unsupported artifact version {version}")

    offset = _PREAMBLE.size
    try:
        header = json.loads(data[offset:offset + header_length].decode("utf-8"))
        params = EncryptionParams.model_validate(header["params"]) if header.get("params") else None
    except (ValueError, KeyError) as e:
        logger.error(f"Corrupt artifact header: {str(e)}")
        raise ArtifactFormatError(f"Corrupt artifact header: {str(e)}")
    if params is not None and params.digest() != header.get("params_digest"):
        raise ArtifactFormatError("Stored parameter digest does not match stored parameters")
    offset += header_length

    polys, cache = [], {}
    try:
        for _ in range(int(header.get("poly_count", 0))):
            poly, offset = deserialize_poly(data, offset, cache)
            polys.append(poly)
    except PolyRingError as e:
        logger.error(f"Corrupt artifact payload: {str(e)}")
        raise ArtifactFormatError(f"Corrupt artifact payload: {str(e)}")
    if offset != len(data):
        raise ArtifactFormatError(f"{len(data) - offset} trailing bytes after artifact payload")

    return Artifact(header["kind"], params, header.get("manifest_digest"), header.get("meta") or {}, polys)


def write_artifact(path: Union[str, Path], artifact: Artifact) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_artifact(artifact))
    logger.debug(f"Wrote {artifact.kind} artifact to {path} ({len(artifact.polys)} polynomials)")
    return path


def read_artifact(path: Union[str, Path], kind: Optional[str] = None,
                  params: Optional[EncryptionParams] = None) -> Artifact:
    """Read a container, optionally checking its kind and parameter binding"""
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise ArtifactError(f"Artifact not found: {path}")
    artifact = decode_artifact(data)
    if kind is not None and artifact.kind != kind:
        raise ArtifactFormatError(f"{path} holds a {artifact.kind} artifact, expected {kind}")
    if params is not None and artifact.params_digest is not None and artifact.params_digest != params.digest():
        logger.error(f"Parameter mismatch reading {path}")
        raise ParamsMismatchError(f"{path} was written under different encryption parameters")
    return artifact


# -- keys ----------------------------------------------------------------

def _flatten_pairs(pairs) -> List[RnsPoly]:
    return [poly for pair in pairs for poly in pair]


def _pairs(polys: Sequence[RnsPoly]) -> Tuple[Tuple[RnsPoly, RnsPoly], ...]:
    if len(polys) % 2:
        raise ArtifactFormatError("Odd number of polynomials where pairs were expected")
    return tuple((polys[i], polys[i + 1]) for i in range(0, len(polys), 2))


def save_keys(directory: Union[str, Path], params: EncryptionParams, sk: SecretKey, pk: PublicKey,
              evk: EvaluationKeys, manifest_digest: Optional[str] = None) -> Dict[str, Path]:
    """Write the three key files; the secret key file is the only one a host must not see"""
    directory = Path(directory)
    digest = params.digest()
    if {sk.params_digest, pk.params_digest, evk.params_digest} != {digest}:
        raise ParamsMismatchError("Keys were generated under different encryption parameters")
    paths = {
        KIND_SECRET_KEY: write_artifact(
            directory / SECRET_KEY_FILE, Artifact(KIND_SECRET_KEY, params, manifest_digest, {}, list(sk.polys))),
        KIND_PUBLIC_KEY: write_artifact(
            directory / PUBLIC_KEY_FILE, Artifact(KIND_PUBLIC_KEY, params, manifest_digest, {}, _flatten_pairs(pk.pairs))),
        KIND_EVALUATION_KEYS: write_artifact(
            directory / EVALUATION_KEYS_FILE,
            Artifact(KIND_EVALUATION_KEYS, params, manifest_digest,
                     {"digit_counts": [len(d) for d in evk.digits]},
                     [poly for digits in evk.digits for poly in _flatten_pairs(digits)])),
    }
    logger.info(f"Saved keys to {directory} (params {digest[:12]})")
    return paths


def load_params(directory: Union[str, Path]) -> EncryptionParams:
    """Parameters stored with the public key of a key directory"""
    artifact = read_artifact(Path(directory) / PUBLIC_KEY_FILE, KIND_PUBLIC_KEY)
    if artifact.params is None:
        raise ArtifactFormatError("Public key artifact carries no parameters")
    return artifact.params


def load_secret_key(directory: Union[str, Path], params: Optional[EncryptionParams] = None) -> SecretKey:
    artifact = read_artifact(Path(directory) / SECRET_KEY_FILE, KIND_SECRET_KEY, params)
    return SecretKey(tuple(artifact.polys), artifact.params_digest)


def load_public_key(directory: Union[str, Path], params: Optional[EncryptionParams] = None) -> PublicKey:
    artifact = read_artifact(Path(directory) / PUBLIC_KEY_FILE, KIND_PUBLIC_KEY, params)
    return PublicKey(_pairs(artifact.polys), artifact.params_digest)


def load_evaluation_keys(directory: Union[str, Path], params: Optional[EncryptionParams] = None) -> EvaluationKeys:
    artifact = read_artifact(Path(directory) / EVALUATION_KEYS_FILE, KIND_EVALUATION_KEYS, params)
    counts = artifact.meta.get("digit_counts") or []
    if 2 * sum(counts) != len(artifact.polys):
        raise ArtifactFormatError("Evaluation key digit counts disagree with the payload")
    digits, offset = [], 0
    for count in counts:
        digits.append(_pairs(artifact.polys[offset:offset + 2 * count]))
        offset += 2 * count
    return EvaluationKeys(tuple(digits), artifact.params_digest)


# -- ciphertexts ---------------------------------------------------------

def _ciphertext_meta(ct: Ciphertext) -> dict:
    return {"scale": ct.scale, "instances": len(ct.components), "counters": ct.counters.counts()}


def _restore_ciphertexts(artifact: Artifact) -> List[Ciphertext]:
    entries = artifact.meta.get("ciphertexts") or []
    if 2 * sum(e["instances"] for e in entries) != len(artifact.polys):
        raise ArtifactFormatError("Ciphertext layout disagrees with the payload")
    cts, offset = [], 0
    for entry in entries:
        count = 2 * entry["instances"]
        components = _pairs(artifact.polys[offset:offset + count])
        offset += count
        cts.append(Ciphertext(components, int(entry["scale"]), artifact.params_digest,
                              OpCounters.opaque(**entry.get("counters", {}))))
    return cts


def save_ciphertexts(path: Union[str, Path], cts: Sequence[Ciphertext], params: EncryptionParams,
                     manifest_digest: Optional[str] = None) -> Path:
    digest = params.digest()
    if any(ct.params_digest != digest for ct in cts):
        raise ParamsMismatchError("Ciphertexts were created under different encryption parameters")
    meta = {"ciphertexts": [_ciphertext_meta(ct) for ct in cts]}
    polys = [poly for ct in cts for poly in _flatten_pairs(ct.components)]
    return write_artifact(path, Artifact(KIND_CIPHERTEXTS, params, manifest_digest, meta, polys))


def load_ciphertexts(path: Union[str, Path], params: Optional[EncryptionParams] = None) -> List[Ciphertext]:
    return _restore_ciphertexts(read_artifact(path, KIND_CIPHERTEXTS, params))


def save_score(path: Union[str, Path], score: EncryptedScore, params: EncryptionParams,
               manifest_digest: Optional[str] = None) -> Path:
    meta = {"ciphertexts": [_ciphertext_meta(score.ciphertext)], "exponent": score.exponent}
    return write_artifact(path, Artifact(KIND_SCORE, params, manifest_digest, meta,
                                         _flatten_pairs(score.ciphertext.components)))


def load_score(path: Union[str, Path], params: Optional[EncryptionParams] = None) -> Tuple[EncryptedScore, Artifact]:
    """Score with its artifact, whose meta keeps the stored op counts"""
    artifact = read_artifact(path, KIND_SCORE, params)
    (ct,) = _restore_ciphertexts(artifact)
    return EncryptedScore(ct, int(artifact.meta["exponent"])), artifact


# -- encrypted model -----------------------------------------------------

def save_encrypted_model(path: Union[str, Path], emodel: EncryptedModel, params: EncryptionParams,
                         manifest_digest: Optional[str] = None) -> Path:
    if emodel.params_digest is not None and emodel.params_digest != params.digest():
        raise ParamsMismatchError("Encrypted model was quantized for different encryption parameters")
    meta = {"model": emodel.to_payload(), "model_digest": emodel.digest()}
    return write_artifact(path, Artifact(KIND_ENCRYPTED_MODEL, params, manifest_digest, meta))


def load_encrypted_model(path: Union[str, Path],
                         params: Optional[EncryptionParams] = None) -> Tuple[EncryptedModel, EncryptionParams]:
    artifact = read_artifact(path, KIND_ENCRYPTED_MODEL, params)
    try:
        emodel = EncryptedModel.from_payload(artifact.meta["model"])
    except (KeyError, ValueError, TypeError) as e:
        logger.error(f"Corrupt encrypted model in {path}: {str(e)}")
        raise ArtifactFormatError(f"Corrupt encrypted model: {str(e)}")
    if emodel.digest() != artifact.meta.get("model_digest"):
        raise ArtifactFormatError("Encrypted model digest mismatch")
    return emodel, artifact.params


class ArtifactError(Exception):
    """Custom exception for artifact storage errors"""
    pass


class ArtifactFormatError(ArtifactError):
    """File is not a valid artifact of the expected kind"""
    pass


class ParamsMismatchError(ArtifactError):
    """Artifact bound to different encryption parameters"""
    pass
