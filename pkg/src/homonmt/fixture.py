"""A small synthetic Chinese->English language for desk-scale experiments.

Sentences come from a handful of templates over a closed lexicon (well under 300
characters). The grammar keeps every character recoverable from the syllables of its
sentence except for a few deliberate true homophones (他/她 "ta", 买/卖 "mai"), which is
what makes pure-syllable translation lossy.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

# (chinese, subject, object, possessive)
PEOPLE = [
    ("我", "i", "me", "my"),
    ("你", "you", "you", "your"),
    ("他", "he", "him", "his"),
    ("她", "she", "her", "her"),
    ("我们", "we", "us", "our"),
    ("他们", "they", "them", "their"),
    ("医生", "the doctor", "the doctor", "the doctor 's"),
    ("老师", "the teacher", "the teacher", "the teacher 's"),
    ("学生", "the student", "the student", "the student 's"),
    ("工人", "the worker", "the worker", "the worker 's"),
    ("农民", "the farmer", "the farmer", "the farmer 's"),
    ("孩子", "the child", "the child", "the child 's"),
    ("司机", "the driver", "the driver", "the driver 's"),
    ("经理", "the manager", "the manager", "the manager 's"),
    ("爸爸", "father", "father", "father 's"),
    ("妈妈", "mother", "mother", "mother 's"),
]
TIMES = [("今天", "today"), ("明天", "tomorrow"), ("昨天", "yesterday"), ("每天", "every day"), ("现在", "now")]
CITIES = [("北京", "beijing"), ("上海", "shanghai"), ("南京", "nanjing"), ("天津", "tianjin"), ("广州", "guangzhou")]
DETS = [("一", "a"), ("这", "this"), ("那", "that")]
ADJS = [("新", "new"), ("好", "good"), ("漂亮", "beautiful")]
# (noun, classifier, english)
PLACES = [
    ("小学", "所", "primary school"), ("大学", "所", "university"), ("医院", "家", "hospital"),
    ("工厂", "家", "factory"), ("商店", "家", "shop"), ("饭店", "家", "restaurant"),
    ("桥", "座", "bridge"), ("公园", "个", "park"), ("花园", "个", "garden"),
    ("房子", "座", "house"), ("马路", "条", "road"),
]
THINGS = [
    ("书", "本", "book"), ("信", "封", "letter"), ("报纸", "份", "newspaper"), ("电脑", "台", "computer"),
    ("车", "辆", "car"), ("衬衫", "件", "shirt"), ("杯子", "个", "cup"), ("手机", "部", "phone"),
]
PLACE_VERBS = [("建", "build"), ("参观", "visit"), ("打扫", "clean"), ("找到", "find"), ("离开", "leave"), ("喜欢", "like")]
PERSON_VERBS = [("帮助", "help"), ("认识", "know"), ("感谢", "thank"), ("等", "wait for"), ("相信", "believe"), ("喜欢", "like")]
THING_VERBS = [("写", "write"), ("读", "read"), ("买", "buy"), ("卖", "sell"), ("找到", "find"), ("喜欢", "like")]
WRITABLE = {"书", "信"}
READABLE = {"书", "信", "报纸"}

# pairs from the worked examples that must appear in the training data
ANCHORS = [
    ("建一所小学", "build a primary school"),
    ("听医生的建议", "listen to the doctor 's advice"),
    ("请拼写它", "please spell it"),
]


@dataclass(frozen=True)
class Pair:
    source: str
    target: str


class Grammar:
    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def pick(self, items):
        return items[int(self.rng.integers(len(items)))]

    def coin(self, p: float = 0.5) -> bool:
        return bool(self.rng.random() < p)

    def noun_phrase(self, nouns):
        noun, cl, en = self.pick(nouns)
        det_zh, det_en = self.pick(DETS)
        if self.coin(0.3):
            adj_zh, adj_en = self.pick(ADJS)
            zh, en = f"{det_zh}{cl}{adj_zh}{noun}", f"{det_en} {adj_en} {en}"
        else:
            zh, en = f"{det_zh}{cl}{noun}", f"{det_en} {en}"
        return zh, en, noun

    def verb_phrase(self):
        kind = self.pick(["place", "person", "thing", "thing", "spell"])
        if kind == "place":
            v_zh, v_en = self.pick(PLACE_VERBS)
            o_zh, o_en, _ = self.noun_phrase(PLACES)
        elif kind == "person":
            v_zh, v_en = self.pick(PERSON_VERBS)
            p = self.pick(PEOPLE)
            o_zh, o_en = p[0], p[2]
        elif kind == "thing":
            v_zh, v_en = self.pick(THING_VERBS)
            if v_zh == "写":
                nouns = [t for t in THINGS if t[0] in WRITABLE]
            elif v_zh == "读":
                nouns = [t for t in THINGS if t[0] in READABLE]
            else:
                nouns = THINGS
            if self.coin(0.15):
                o_zh, o_en = "它", "it"
            else:
                o_zh, o_en, _ = self.noun_phrase(nouns)
        else:
            v_zh, v_en = "拼写", "spell"
            r = self.rng.random()
            if r < 0.3:
                o_zh, o_en = "它", "it"
            elif r < 0.6:
                det_zh, det_en = self.pick(DETS[1:])
                o_zh, o_en = f"{det_zh}个名字", f"{det_en} name"
            else:
                p = self.pick(PEOPLE)
                o_zh, o_en = f"{p[0]}的名字", f"{p[3]} name"
        return f"{v_zh}{o_zh}", f"{v_en} {o_en}"

    def sentence(self) -> Pair:
        kind = self.rng.random()
        if kind < 0.15:
            vp_zh, vp_en = self.verb_phrase()
            if self.coin():
                return Pair(f"请{vp_zh}", f"please {vp_en}")
            return Pair(vp_zh, vp_en)
        if kind < 0.3:
            p = self.pick(PEOPLE)
            zh, en = f"听{p[0]}的建议", f"listen to {p[3]} advice"
            if self.coin():
                s = self.pick(PEOPLE)
                zh, en = s[0] + zh, f"{s[1]} {en}"
            return Pair(zh, en)
        s = self.pick(PEOPLE)
        zh, en_tail = s[0], ""
        if self.coin(0.4):
            t_zh, t_en = self.pick(TIMES)
            zh += t_zh
            en_tail = f" {t_en}"
        if self.coin(0.3):
            c_zh, c_en = self.pick(CITIES)
            zh += f"在{c_zh}"
            en_tail = f" in {c_en}{en_tail}"
        want = self.coin(0.2)
        vp_zh, vp_en = self.verb_phrase()
        if want:
            return Pair(f"{zh}想{vp_zh}", f"{s[1]} want to {vp_en}{en_tail}")
        return Pair(f"{zh}{vp_zh}", f"{s[1]} {vp_en}{en_tail}")


def generate(n: int, seed: int, exclude: set[str] = frozenset(), anchors: bool = False) -> list[Pair]:
    """``n`` distinct pairs (by source); sources in ``exclude`` are skipped."""
    g = Grammar(np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0x51A]))))
    seen = set(exclude)
    out: list[Pair] = []
    if anchors:
        for zh, en in ANCHORS:
            if zh not in seen:
                seen.add(zh)
                out.append(Pair(zh, en))
    tries = 0
    while len(out) < n:
        tries += 1
        if tries > 100 * n + 1000:
            raise RuntimeError("grammar cannot produce enough distinct sentences")
        p = g.sentence()
        if p.source in seen:
            continue
        seen.add(p.source)
        out.append(p)
    return out


def lexicon_chars() -> set[str]:
    chars: set[str] = set("请听的建议它名字个拼写在想")
    for group in (PEOPLE, TIMES, CITIES, DETS, ADJS, PLACE_VERBS, PERSON_VERBS, THING_VERBS):
        for item in group:
            chars.update(item[0])
    for noun, cl, _ in PLACES + THINGS:
        chars.update(noun + cl)
    return chars


@dataclass(frozen=True)
class FixtureSizes:
    monolingual: int = 3000
    detector_heldout: int = 500
    train: int = 2500
    test: int = 200


def build_fixture(seed: int = 0, sizes: FixtureSizes = FixtureSizes()) -> dict[str, list[Pair]]:
    """Disjoint splits: detector monolingual/held-out, NMT train (with anchors)/test."""
    train = generate(sizes.train, seed, anchors=True)
    used = {p.source for p in train}
    test = generate(sizes.test, seed + 1, exclude=used)
    used |= {p.source for p in test}
    mono = generate(sizes.monolingual, seed + 2, exclude={p.source for p in test}, anchors=True)
    used |= {p.source for p in mono}
    heldout = generate(sizes.detector_heldout, seed + 3, exclude=used)
    return {"train": train, "test": test, "monolingual": mono, "detector_heldout": heldout}


def iter_lines(pairs: list[Pair], with_target: bool = True) -> Iterator[str]:
    for p in pairs:
        yield f"{p.source}\t{p.target}" if with_target else p.source
