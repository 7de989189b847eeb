#!/usr/bin/env python3
"""Writes 50 unified-diff fragments to tests/fixtures/diffs (seeded, reproducible)."""

import random
from pathlib import Path

OUT = Path(__file__).resolve().parent / "diffs"
WORDS = ["buf", "len", "ctx", "size", "return", "if", "err", "name", "node", "value", "-- x", "++y", "@@", "\\t"]
CTX = ["", "int parse(struct ctx *c)", "def handle(self, req):", "func (s *Server) Serve(l net.Listener) error {",
       "public void run()", "class Foo"]


def text(rng):
    n = rng.randint(0, 6)
    return " ".join(rng.choice(WORDS) for _ in range(n))


def make_hunk(rng, old_start, new_start, last, cr):
    lines = []
    for _ in range(rng.randint(1, 9)):
        lines.append((rng.choice(" +-"), text(rng) + ("\r" if cr else "")))
    old_len = sum(1 for m, _ in lines if m != "+")
    new_len = sum(1 for m, _ in lines if m != "-")
    if old_len == 0:
        old_start = 0 if rng.random() < 0.5 and old_start == 1 else old_start
    def rng_part(sign, start, length):
        if length == 1 and rng.random() < 0.5:
            return f"{sign}{start}"
        return f"{sign}{start},{length}"
    head = f"@@ {rng_part('-', old_start, old_len)} {rng_part('+', new_start, new_len)} @@"
    ctx = rng.choice(CTX)
    if ctx:
        head += " " + ctx
    out = [head]
    for k, (m, t) in enumerate(lines):
        out.append(m + t)
        if last and k == len(lines) - 1 and rng.random() < 0.3:
            out.append("\\ No newline at end of file")
    return out, old_len, new_len


def fragment(rng, k):
    if k == 0:
        return ""
    if k == 1:
        return "diff --git a/old.c b/new.c\nsimilarity index 100%\nrename from old.c\nrename to new.c\n"
    out = []
    if rng.random() < 0.4:
        out += [f"diff --git a/f{k}.c b/f{k}.c", f"index 1234567..89abcde 100644", f"--- a/f{k}.c", f"+++ b/f{k}.c"]
    old_start = new_start = rng.randint(1, 40)
    hunks = rng.randint(1, 4)
    for h in range(hunks):
        # Every 17th fragment carries CRLF file content, as git emits it.
        lines, ol, nl = make_hunk(rng, old_start, new_start, h == hunks - 1, k % 17 == 5)
        out += lines
        old_start += ol + rng.randint(1, 30)
        new_start += nl + rng.randint(1, 30)
    body = "\n".join(out)
    if rng.random() < 0.5:
        body += "\n"
    return body


def main():
    OUT.mkdir(exist_ok=True)
    for old in OUT.glob("*.diff"):
        old.unlink()
    rng = random.Random(20240611)
    for k in range(50):
        (OUT / f"f{k:02d}.diff").write_bytes(fragment(rng, k).encode())


if __name__ == "__main__":
    main()
