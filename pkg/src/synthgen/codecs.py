"""Minimal readers/writers for the float image formats used by the pipeline.

Radiance RGBE (``.hdr``) for environment maps, PFM for depth/normal passes,
and PNG (8/16 bit) through Pillow. Arrays are always row-major with row 0 at
the top of the image.
"""

from __future__ import annotations

import io
import re
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import AssetError

# ---------------------------------------------------------------- PFM


def write_pfm(path, data: np.ndarray) -> None:
    data = np.asarray(data, dtype=np.float32)
    if data.ndim == 2:
        header = b"Pf"
        h, w = data.shape
    elif data.ndim == 3 and data.shape[2] == 3:
        header = b"PF"
        h, w = data.shape[:2]
    else:
        raise ValueError(f"PFM needs HxW or HxWx3 data, got shape {data.shape}")
    body = np.ascontiguousarray(data[::-1]).astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header + b"\n" + f"{w} {h}\n".encode() + b"-1.0\n" + body)


def read_pfm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if len(parts) < 4 or parts[0].strip() not in (b"PF", b"Pf"):
        raise AssetError(f"{path}: not a PFM file")
    channels = 3 if parts[0].strip() == b"PF" else 1
    try:
        w, h = (int(v) for v in parts[1].split())
        scale = float(parts[2])
    except ValueError:
        raise AssetError(f"{path}: malformed PFM header") from None
    dtype = "<f4" if scale < 0 else ">f4"
    count = w * h * channels
    if len(parts[3]) < count * 4:
        raise AssetError(f"{path}: truncated PFM data")
    data = np.frombuffer(parts[3], dtype=dtype, count=count).astype(np.float32)
    shape = (h, w, 3) if channels == 3 else (h, w)
    return data.reshape(shape)[::-1].copy()


# ---------------------------------------------------------------- Radiance HDR

_RES_RE = re.compile(rb"^-Y (\d+) \+X (\d+)$")


def write_hdr(path, radiance: np.ndarray) -> None:
    """Write flat (uncompressed) RGBE scanlines."""
    rgb = np.asarray(radiance, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError("radiance must be HxWx3")
    h, w = rgb.shape[:2]
    peak = rgb.max(axis=2)
    mant, expo = np.frexp(peak)
    rgbe = np.zeros((h, w, 4), dtype=np.uint8)
    nz = peak > 1e-32
    factor = np.where(nz, mant * 256.0 / np.where(nz, peak, 1.0), 0.0)
    rgbe[..., :3] = np.clip(np.floor(rgb * factor[..., None]), 0, 255).astype(np.uint8)
    rgbe[..., 3] = np.where(nz, expo + 128, 0).astype(np.uint8)
    header = b"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n" + f"-Y {h} +X {w}\n".encode()
    with open(path, "wb") as fh:
        fh.write(header + rgbe.tobytes())


def _decode_scanline(buf: bytes, pos: int, w: int, path) -> tuple[np.ndarray, int]:
    if 8 <= w <= 0x7FFF and buf[pos:pos + 2] == b"\x02\x02" and not buf[pos + 2] & 0x80:
        if (buf[pos + 2] << 8 | buf[pos + 3]) != w:
            raise AssetError(f"{path}: RLE scanline width mismatch")
        pos += 4
        line = np.empty((4, w), dtype=np.uint8)
        for ch in range(4):
            x = 0
            while x < w:
                if pos >= len(buf):
                    raise AssetError(f"{path}: truncated RLE data")
                count = buf[pos]
                pos += 1
                if count > 128:
                    count -= 128
                    if x + count > w:
                        raise AssetError(f"{path}: RLE run overflows scanline")
                    line[ch, x:x + count] = buf[pos]
                    pos += 1
                else:
                    if count == 0 or x + count > w:
                        raise AssetError(f"{path}: bad RLE literal run")
                    line[ch, x:x + count] = np.frombuffer(buf, np.uint8, count, pos)
                    pos += count
                x += count
        return line.T, pos
    if buf[pos:pos + 3] == b"\x01\x01\x01":
        raise AssetError(f"{path}: old-style RLE RGBE is not supported")
    end = pos + 4 * w
    if end > len(buf):
        raise AssetError(f"{path}: truncated pixel data")
    return np.frombuffer(buf, np.uint8, 4 * w, pos).reshape(w, 4), end


def read_hdr(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    if not (buf.startswith(b"#?RADIANCE") or buf.startswith(b"#?RGBE")):
        raise AssetError(f"{path}: missing Radiance signature")
    head_end = buf.find(b"\n\n")
    if head_end < 0:
        raise AssetError(f"{path}: unterminated header")
    for line in buf[:head_end].split(b"\n"):
        if line.startswith(b"FORMAT=") and line.strip() != b"FORMAT=32-bit_rle_rgbe":
            raise AssetError(f"{path}: unsupported format {line.decode(errors='replace')}")
    res_end = buf.find(b"\n", head_end + 2)
    m = _RES_RE.match(buf[head_end + 2:res_end].strip())
    if not m:
        raise AssetError(f"{path}: only '-Y H +X W' orientation is supported")
    h, w = int(m.group(1)), int(m.group(2))
    pos = res_end + 1
    rgbe = np.empty((h, w, 4), dtype=np.uint8)
    for y in range(h):
        rgbe[y], pos = _decode_scanline(buf, pos, w, path)
    e = rgbe[..., 3].astype(np.int32)
    scale = np.where(e > 0, np.ldexp(1.0, e - 136), 0.0)
    return (rgbe[..., :3].astype(np.float64) * scale[..., None]).astype(np.float32)


# ---------------------------------------------------------------- PNG


def linear_to_srgb(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * np.power(x, 1.0 / 2.4) - 0.055)


def srgb_to_linear(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.where(x <= 0.04045, x / 12.92, np.power((x + 0.055) / 1.055, 2.4))


def encode_srgb8(rgb: np.ndarray, exposure: float = 1.0) -> np.ndarray:
    return np.round(linear_to_srgb(np.asarray(rgb, dtype=np.float64) * exposure) * 255.0).astype(np.uint8)


def write_png8(path, rgb8: np.ndarray) -> None:
    Image.fromarray(np.ascontiguousarray(rgb8, dtype=np.uint8)).save(path, format="PNG")


def write_png16(path, values: np.ndarray) -> None:
    arr = np.asarray(values)
    if arr.min(initial=0) < 0 or arr.max(initial=0) > 0xFFFF:
        raise ValueError("16-bit PNG values must lie in [0, 65535]")
    img = Image.fromarray(np.ascontiguousarray(arr.astype("<u2")))  # uint16 maps to I;16
    img.save(path, format="PNG")


def read_png(path) -> np.ndarray:
    with Image.open(path) as img:
        if img.mode in ("I;16", "I;16B", "I"):
            return np.asarray(img, dtype=np.int64).astype(np.uint16)
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def decode_image_bytes(data: bytes, label: str) -> np.ndarray:
    """Decode an embedded PNG/JPEG texture into linear float RGB."""
    try:
        with Image.open(io.BytesIO(data)) as img:
            srgb = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    except Exception as exc:  # Pillow raises several unrelated types
        raise AssetError(f"{label}: cannot decode texture ({exc})") from None
    return srgb_to_linear(srgb).astype(np.float32)
