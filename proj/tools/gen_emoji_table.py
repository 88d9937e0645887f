#!/usr/bin/env python3
"""Regenerate the pinned emoji short-name table from the `emoji` package.

Usage: gen_emoji_table.py <path-to-extracted-emoji-package> <out.json>

Keys are space-separated uppercase hex codepoints; values are the English
CLDR short name with the surrounding colons removed.
"""
import json
import sys


def main() -> int:
    sys.path.insert(0, sys.argv[1])
    import emoji
    from emoji.unicode_codes import EMOJI_DATA

    entries = {}
    for seq, info in EMOJI_DATA.items():
        key = " ".join(f"{ord(ch):04X}" for ch in seq)
        entries[key] = info["en"].strip(":")
    table = {
        "version": f"emoji-{emoji.__version__}",
        "entries": dict(sorted(entries.items())),
    }
    with open(sys.argv[2], "w", encoding="utf-8") as out:
        json.dump(table, out, ensure_ascii=False, indent=0)
        out.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
