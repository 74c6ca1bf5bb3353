from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Sequence

IHEX_DATA = 0x00
IHEX_EOF = 0x01
IHEX_EOF_RECORD = ":00000001FF"


def parse_ihex(text: str) -> bytes:
    """Flatten Intel HEX data records (types 00/01) into an image at offset 0.

    Record addresses are offsets from the load base; gaps read as zero.
    """

    chunks: Dict[int, bytes] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if not line.startswith(":"):
            raise ValueError(f"Malformed hex record on line {line_no}: missing ':'")
        try:
            record = bytes.fromhex(line[1:])
        except ValueError as exc:
            raise ValueError(f"Malformed hex record on line {line_no}: {line!r}") from exc
        if len(record) < 5 or len(record) != record[0] + 5:
            raise ValueError(f"Malformed hex record on line {line_no}: bad length")
        if sum(record) & 0xFF:
            raise ValueError(f"Checksum mismatch on line {line_no}")
        record_type = record[3]
        if record_type == IHEX_EOF:
            break
        if record_type != IHEX_DATA:
            raise ValueError(f"Unsupported hex record type {record_type:02X} on line {line_no}")
        address = (record[1] << 8) | record[2]
        chunks[address] = record[4:-1]
    if not chunks:
        return b""
    size = max(address + len(data) for address, data in chunks.items())
    image = bytearray(size)
    for address, data in chunks.items():
        image[address : address + len(data)] = data
    return bytes(image)


def format_ihex(data: bytes, record_len: int = 16) -> str:
    if len(data) > 0x10000:
        raise ValueError("images above 64 KiB need extended address records, which are not supported")
    lines: List[str] = []
    for address in range(0, len(data), record_len):
        chunk = data[address : address + record_len]
        record = bytes([len(chunk), (address >> 8) & 0xFF, address & 0xFF, IHEX_DATA]) + chunk
        checksum = (-sum(record)) & 0xFF
        lines.append(":" + (record + bytes([checksum])).hex().upper())
    lines.append(IHEX_EOF_RECORD)
    return "\n".join(lines) + "\n"


def words_to_bytes(words: Iterable[int]) -> bytes:
    return b"".join((int(word) & 0xFFFFFFFF).to_bytes(4, "little") for word in words)


def load_image(path: str | Path) -> bytes:
    """Read a raw binary image, or an Intel HEX file when the suffix is .hex/.ihex."""

    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Program file not found: {path}")
    if path.suffix.lower() in (".hex", ".ihex"):
        return parse_ihex(path.read_text(encoding="utf-8"))
    return path.read_bytes()


def save_binary(path: str | Path, data: bytes) -> None:
    Path(path).write_bytes(data)


def save_ihex(path: str | Path, data: bytes) -> None:
    Path(path).write_text(format_ihex(data), encoding="utf-8")


def save_json(path: str | Path, payload: Mapping[str, object]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def save_csv(path: str | Path, rows: Sequence[Mapping[str, object]], columns: Sequence[str]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(columns))
        writer.writeheader()
        for row in rows:
            writer.writerow({column: row.get(column, "") for column in columns})
