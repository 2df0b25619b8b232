"""Field values behind the frozen hex dumps in ``golden/``.

Regenerate (only when the wire format deliberately changes) with
``python tests/golden_vectors.py``; the bytes come from the test-side packer.
"""

from pathlib import Path

import oracles

INF = oracles.INF
GOLDEN = Path(__file__).parent / "golden"

VECTORS = {
    "data_empty": dict(kind="DATA", slice_id=1, conn_id=1, seq=0, timestamp=0),
    "data_payload": dict(kind="DATA", slice_id=7, conn_id=42, seq=123456, timestamp=987654,
                         payload=bytes.fromhex("0001e240") * 4),
    "data_odd_payload": dict(kind="DATA", slice_id=0xDEADBEEF, conn_id=0xFFFFFFFF, seq=0xFFFFFFFE,
                             timestamp=0xFFFFFFFF, payload=b"abc"),
    "syn": dict(kind="SYN", slice_id=1, conn_id=5),
    "syn_ack": dict(kind="SYN_ACK", slice_id=1, conn_id=5, timestamp=60000),
    "rr_c": dict(kind="RR", trigger="C", slice_id=1, conn_id=1, seq=3, timestamp=1633751,
                 optional=(3, 3, 5, 0, 1633751)),
    "rr_t": dict(kind="RR", trigger="T", slice_id=1, conn_id=1, seq=102, timestamp=5000,
                 optional=(1, 100, INF, 2, 5000)),
    "rd_r": dict(kind="RD", trigger="R", slice_id=1, conn_id=1, seq=200, timestamp=3143752,
                 optional=(9, 200, 201, 0, 3133751), payload=bytes(range(8))),
    "ri": dict(kind="RI", slice_id=1, conn_id=1, seq=3, timestamp=1633751, optional=(3, 3, 5, 0, 3)),
    "cn": dict(kind="CN", slice_id=1, conn_id=1, seq=99, timestamp=1500000, optional=(0, 99, 99, 0, 99)),
}


def golden_bytes(name):
    text = (GOLDEN / f"{name}.hex").read_text()
    return bytes.fromhex("".join(line.split("#", 1)[0] for line in text.splitlines()))


def _regenerate():
    GOLDEN.mkdir(exist_ok=True)
    for name, fields in VECTORS.items():
        buf = oracles.pack(**fields)
        lines = [f"# {name}: {len(buf)} bytes"]
        lines += [buf[i:i + 16].hex(" ") for i in range(0, len(buf), 16)]
        (GOLDEN / f"{name}.hex").write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    _regenerate()
