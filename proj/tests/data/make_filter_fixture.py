#!/usr/bin/env python3
"""Regenerates filter_fixture.jsonl, the 200-playlist corpus used by the
filter tests.

The fixture is constructed bucket by bucket and then re-verified with the
small independent filter implementation below, so the expected counts in the
C++ tests can be trusted:

    total 200
    kept 117
    rejected: 40 too few title tokens, 25 too few tracks,
              18 short title tokens
    average title length strictly increases after filtering
"""

import json
import random
from pathlib import Path

OUT = Path(__file__).with_name("filter_fixture.jsonl")

UNICODE_SPACES = "	   　"


def tokenize(title: str):
    tokens = []
    current = []
    for ch in title:
        if ch.isspace() or ch in UNICODE_SPACES:
            if current:
                tokens.append("".join(current))
                current = []
        elif "A" <= ch <= "Z":
            current.append(ch.lower())
        else:
            current.append(ch)
    if current:
        tokens.append("".join(current))
    return tokens


def classify(title: str, n_tracks: int):
    """Returns 'pass' or the first failed criterion, mirroring the filter."""
    tokens = tokenize(title)
    if len(tokens) <= 3:
        return "tokens"
    if n_tracks <= 10:
        return "tracks"
    avg = sum(len(t) for t in tokens) / len(tokens)
    if not avg > 3.0:
        return "chars"
    return "pass"


PASS_TITLES = [
    "Late Night Drive Mix Vol {i}",
    "rainy day coffee shop jazz {i}",
    "가을밤에 어울리는 로맨틱 재즈곡들 {i}",
    "Deep Focus STUDY beats for finals {i}",
    "sunday morning acoustic favourites {i}",
    "운동할때 들으면 신나는 음악모음집 {i}",
    "road trip singalong classics volume {i}",
    "chill electronic tracks　for coding {i}",
    "throwback hip hop party anthems {i}",
    "calm piano pieces before sleep {i}",
]

TOKENS_FAIL_TITLES = [
    "",
    "   ",
    "pop",
    "JAZZ",
    "workout mix",
    "best songs",
    "k-pop 2020 hits",
    "my favourite tunes",
    "여름 노래",
    "chill vibes only",
]

CHARS_FAIL_TITLES = [
    "g e o r g e w i n s t o n e {i}",
    "a b c d e f g {i}",
    "봄 꽃 길 위 {i}",
    "mix of top 40 {i}",
    "la la la la la {i}",
    "do re mi fa sol {i}",
]


def main():
    rng = random.Random(20240615)
    rows = []

    def tracks(n):
        return ["m%06d" % rng.randrange(1, 400000) for _ in range(n)]

    # 117 passing: > 3 tokens, > 10 tracks, mean token length > 3.
    for i in range(117):
        title = PASS_TITLES[i % len(PASS_TITLES)].format(i=i)
        n = rng.randrange(11, 61)
        assert classify(title, n) == "pass", title
        rows.append({"title": title, "tracks": tracks(n)})

    # 40 failing the token-count criterion first (many also have few
    # tracks; they must still count under the first criterion).
    for i in range(40):
        title = TOKENS_FAIL_TITLES[i % len(TOKENS_FAIL_TITLES)]
        n = rng.randrange(0, 40)
        assert classify(title, n) == "tokens", title
        rows.append({"title": title, "tracks": tracks(n)})

    # 25 failing only the track-count criterion (10 tracks is a boundary:
    # "more than 10" is strict).
    for i in range(25):
        title = PASS_TITLES[i % len(PASS_TITLES)].format(i=1000 + i)
        n = 10 if i == 0 else rng.randrange(0, 11)
        assert classify(title, n) == "tracks", title
        rows.append({"title": title, "tracks": tracks(n)})

    # 18 failing only the average-character criterion, including the exact
    # 3.0 boundary ("more than 3" is strict: four 3-char tokens fail).
    for i in range(18):
        if i == 0:
            title = "abc def ghi jkl"
        else:
            title = CHARS_FAIL_TITLES[i % len(CHARS_FAIL_TITLES)].format(i=i)
        n = rng.randrange(11, 40)
        assert classify(title, n) == "chars", title
        rows.append({"title": title, "tracks": tracks(n)})

    rng.shuffle(rows)
    counts = {"pass": 0, "tokens": 0, "tracks": 0, "chars": 0}
    total_tokens_before = 0
    total_tokens_after = 0
    kept = 0
    for idx, row in enumerate(rows):
        row_id = "fx%03d" % idx
        verdict = classify(row["title"], len(row["tracks"]))
        counts[verdict] += 1
        ntok = len(tokenize(row["title"]))
        total_tokens_before += ntok
        if verdict == "pass":
            kept += 1
            total_tokens_after += ntok
        row["id"] = row_id

    assert counts == {"pass": 117, "tokens": 40, "tracks": 25, "chars": 18}, counts
    avg_before = total_tokens_before / len(rows)
    avg_after = total_tokens_after / kept
    assert avg_after > avg_before, (avg_before, avg_after)
    print("counts:", counts)
    print("average title length: %.4f -> %.4f" % (avg_before, avg_after))

    with OUT.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(
                {"id": row["id"], "title": row["title"], "tracks": row["tracks"]},
                ensure_ascii=False) + "\n")
    print("wrote", OUT)


if __name__ == "__main__":
    main()
