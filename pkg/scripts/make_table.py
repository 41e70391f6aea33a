"""Regenerate the shipped character/syllable table from GB2312 level-1 characters.

Needs pypinyin (``pip install pypinyin``). Only the first (most frequent) reading of
each character is kept and tones are dropped; u-umlaut is written ``v``.
"""
import argparse

from pypinyin import Style, lazy_pinyin


def gb2312_level1():
    for hi in range(0xB0, 0xD8):
        for lo in range(0xA1, 0xFF):
            try:
                yield bytes([hi, lo]).decode("gb2312")
            except UnicodeDecodeError:
                continue


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="src/homonmt/data/syllables.tsv")
    args = parser.parse_args()
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# character<TAB>toneless syllable; GB2312 level-1, generated by pypinyin\n")
        for c in gb2312_level1():
            fh.write(f"{c}\t{lazy_pinyin(c, style=Style.NORMAL)[0]}\n")


if __name__ == "__main__":
    main()
