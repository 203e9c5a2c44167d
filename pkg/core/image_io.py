"""
Image File I/O

Pure Python implementation - NO Django imports.
PFM for depth, disparity, weights and feature planes (little-endian,
scale -1, bottom-to-top rows); PNG for color with a declared gamma chunk.
"""
import struct
import zlib
from pathlib import Path

import cv2
import numpy as np

from core.errors import InvalidArgumentError
from core.imaging import ImageBuffer


DISPLAY_GAMMA = 2.2
PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


def write_pfm(path, values: np.ndarray) -> Path:
    """Write an H x W (Pf) or H x W x 3 (PF) array as little-endian PFM."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 3 and values.shape[2] == 1:
        values = values[:, :, 0]
    if values.ndim == 2:
        header = b"Pf"
    elif values.ndim == 3 and values.shape[2] == 3:
        header = b"PF"
    else:
        raise InvalidArgumentError(f"PFM holds 1 or 3 channels, got shape {values.shape}")
    height, width = values.shape[:2]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(header + b"\n")
        f.write(f"{width} {height}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(np.flipud(values).astype("<f4").tobytes())
    return path


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.readline().strip()
        if header not in (b"Pf", b"PF"):
            raise InvalidArgumentError(f"{path} is not a PFM file")
        width, height = (int(x) for x in f.readline().split())
        scale = float(f.readline().strip())
        dtype = "<f4" if scale < 0 else ">f4"
        channels = 3 if header == b"PF" else 1
        data = np.frombuffer(f.read(), dtype=dtype, count=width * height * channels)
    shape = (height, width, 3) if channels == 3 else (height, width)
    return np.flipud(data.reshape(shape)).astype(np.float64)


def write_feature_stack(directory, features: np.ndarray, alpha: np.ndarray | None = None) -> list[Path]:
    """One single-channel PFM per feature plane, plus an alpha plane when given."""
    directory = Path(directory)
    paths = [write_pfm(directory / f"feature_{c:02d}.pfm", features[:, :, c]) for c in range(features.shape[2])]
    if alpha is not None:
        paths.append(write_pfm(directory / "alpha.pfm", alpha))
    return paths


def _png_chunk(kind: bytes, payload: bytes) -> bytes:
    crc = zlib.crc32(kind + payload) & 0xFFFFFFFF
    return struct.pack(">I", len(payload)) + kind + payload + struct.pack(">I", crc)


def _insert_gamma(png: bytes, gamma: float) -> bytes:
    # gAMA must precede IDAT; IHDR is always the first chunk (8-byte signature + 25 bytes)
    ihdr_end = len(PNG_SIGNATURE) + 25
    chunk = _png_chunk(b"gAMA", struct.pack(">I", int(round(100000.0 / gamma))))
    return png[:ihdr_end] + chunk + png[ihdr_end:]


def _read_gamma(png: bytes) -> float | None:
    offset = len(PNG_SIGNATURE)
    while offset + 8 <= len(png):
        length, kind = struct.unpack(">I4s", png[offset:offset + 8])
        if kind == b"gAMA":
            return 100000.0 / struct.unpack(">I", png[offset + 8:offset + 12])[0]
        if kind == b"IDAT":
            return None
        offset += 12 + length
    return None


def encode_png(image: ImageBuffer, bit_depth: int = 16, gamma: float = DISPLAY_GAMMA) -> bytes:
    """
    Encode a linear-light image as PNG.

    Values are gamma-encoded with exponent 1/gamma and the file declares the
    matching gAMA chunk, so readers recover linear light.
    """
    if bit_depth not in (8, 16):
        raise InvalidArgumentError(f"PNG bit depth must be 8 or 16, got {bit_depth}")
    if image.channels not in (1, 3):
        raise InvalidArgumentError(f"PNG output needs 1 or 3 channels, got {image.channels}")
    peak = 255 if bit_depth == 8 else 65535
    encoded = np.power(np.clip(image.values, 0.0, 1.0), 1.0 / gamma)
    quantized = np.rint(encoded * peak).astype(np.uint8 if bit_depth == 8 else np.uint16)
    if image.channels == 3:
        quantized = cv2.cvtColor(quantized, cv2.COLOR_RGB2BGR)
    else:
        quantized = quantized[:, :, 0]
    ok, buffer = cv2.imencode(".png", quantized)
    if not ok:
        raise InvalidArgumentError("PNG encoding failed")
    return _insert_gamma(buffer.tobytes(), gamma)


def write_png(path, image: ImageBuffer, bit_depth: int = 16, gamma: float = DISPLAY_GAMMA) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_png(image, bit_depth, gamma))
    return path


def write_mask_png(path, mask: np.ndarray) -> Path:
    """Binary mask as an 8-bit PNG (0 / 255) without gamma."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ok, buffer = cv2.imencode(".png", np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8))
    if not ok:
        raise InvalidArgumentError("PNG encoding failed")
    path.write_bytes(buffer.tobytes())
    return path


def read_png(path) -> ImageBuffer:
    """Read a PNG into linear light, honoring its gAMA chunk (display gamma 2.2 when absent)."""
    data = Path(path).read_bytes()
    decoded = cv2.imdecode(np.frombuffer(data, dtype=np.uint8), cv2.IMREAD_UNCHANGED)
    if decoded is None:
        raise InvalidArgumentError(f"{path} is not a readable PNG")
    peak = 65535.0 if decoded.dtype == np.uint16 else 255.0
    values = decoded.astype(np.float64) / peak
    if values.ndim == 3:
        values = values[:, :, :3][:, :, ::-1]
    gamma = _read_gamma(data) or DISPLAY_GAMMA
    return ImageBuffer(np.power(values, gamma))


def read_mask_png(path) -> np.ndarray:
    decoded = cv2.imdecode(np.frombuffer(Path(path).read_bytes(), dtype=np.uint8), cv2.IMREAD_GRAYSCALE)
    if decoded is None:
        raise InvalidArgumentError(f"{path} is not a readable PNG")
    return decoded > 127
