#!/usr/bin/env python3
"""Writes the SRT conformance corpus used by the round-trip tests.

Every file is in canonical form (what the serializer emits), so parsing and
re-serializing must give the same bytes. A few files use CRLF line endings;
the tests compare those after normalizing line endings.

    python3 tools/gen_srt_corpus.py tests/data/srt
"""

import random
import sys
from pathlib import Path

WORDS = (
    "the a we you they night house door river light back home never again "
    "what why where when here there now later good bad loose time road"
).split()
UNICODE = ["Ça va ?", "Größe", "¿Qué pasa?", "Привет!", "Καλημέρα.", "日本語のテキスト。", "naïve café", "—Wait…"]
MARKUP = ["<i>{}</i>", "<b>{}</b>", '<font color="#ffff00">{}</font>', "{}"]
CAPTIONS = ["[whispers]", "[music]", "[door slams]", "[laughs]"]


def ts(ms: int) -> str:
    h, ms = divmod(ms, 3600000)
    m, ms = divmod(ms, 60000)
    s, ms = divmod(ms, 1000)
    return f"{h:02d}:{m:02d}:{s:02d},{ms:03d}"


def line(rng: random.Random) -> str:
    kind = rng.random()
    if kind < 0.15:
        return rng.choice(UNICODE)
    words = [rng.choice(WORDS) for _ in range(rng.randint(1, 9))]
    if rng.random() < 0.2:
        words.insert(rng.randrange(len(words) + 1), str(rng.randint(0, 9999)))
    text = " ".join(words)
    text = text[0].upper() + text[1:] + rng.choice([".", "?", "!", "...", ",", ""])
    if rng.random() < 0.1:
        text = rng.choice(CAPTIONS) + " " + text
    if rng.random() < 0.15:
        text = "- " + text
    return rng.choice(MARKUP).format(text)


def srt_file(rng: random.Random, index: int) -> str:
    n_blocks = 0 if index == 0 else (1 if index == 1 else rng.randint(2, 60))
    clock = rng.randint(0, 5000)
    if index == 2:
        clock = 98 * 3600000  # near the 99-hour ceiling
    out = []
    for b in range(n_blocks):
        start = clock
        end = start + rng.randint(1, 6000)
        out.append(f"{b + 1}\n{ts(start)} --> {ts(end)}\n")
        for _ in range(rng.choice([1, 1, 1, 2, 2, 3])):
            out.append(line(rng) + "\n")
        out.append("\n")
        clock = end + rng.randint(0, 2000)
    return "".join(out)


def main() -> None:
    target = Path(sys.argv[1] if len(sys.argv) > 1 else "tests/data/srt")
    target.mkdir(parents=True, exist_ok=True)
    rng = random.Random(20240611)
    for i in range(50):
        text = srt_file(rng, i)
        crlf = i % 10 == 7
        name = f"conf{i:02d}{'_crlf' if crlf else ''}.srt"
        data = text.replace("\n", "\r\n") if crlf else text
        (target / name).write_bytes(data.encode("utf-8"))


if __name__ == "__main__":
    main()
