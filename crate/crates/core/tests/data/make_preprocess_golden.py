"""Regenerates preprocess_golden.jsonl with an implementation independent of the crate.

Emoji names come from the `emoji` package (2.16). Run from this directory.
"""

import json
import re

import emoji

EMOJI_RANGES = re.compile(
    "[\U0001F000-\U0001FAFF☀-➿⬀-⯿‍︎️⃣\U000E0020-\U000E007F]"
)
URL = re.compile(r"^(https?://|www\.)", re.IGNORECASE)


def name_of(chars, data):
    return " " + data["en"].strip(":").replace("_", " ").lower() + " "


def preprocess(text):
    text = text.replace("️", "")
    text = emoji.replace_emoji(text, replace=name_of)
    text = EMOJI_RANGES.sub("", text)
    tokens = text.lower().split()
    while True:
        kept = [t for t in tokens if not URL.match(t) and not t.startswith("@")]
        stripped = [t.replace("#", "") for t in kept]
        stripped = [t for t in stripped if t]
        if stripped == tokens:
            return " ".join(tokens)
        tokens = stripped


CASES = [
    "I love this 😂",
    "❤️ you",
    "Great job 👍🏽 team",
    "pride 🏳️‍🌈 parade",
    "family 👨‍👩‍👧 time",
    "🇺🇸 vs 🇲🇽",
    "press #️⃣ now",
    "ok👌fine",
    "Check https://example.com/path?q=1 now",
    "visit www.news.org today",
    "HTTP://LOUD.COM and Https://mixed.Case/x",
    "not a url: xhttp://nope and wwwdot",
    "@user hello @another",
    "email me at someone@example.com",
    "#Election2024 is #trending",
    "##double ###triple",
    "#@hidden mention",
    "#https://hidden.url stays out",
    "a # b",
    "SHOUTING Text HERE",
    "ÉCOLE Ünïcödé",
    "  leading and trailing  ",
    "tabs\tand\nnewlines\r\nmixed",
    "multiple     spaces   here",
    "",
    "   ",
    "😂😂😂",
    "@a #b https://c.d 😀 E",
    "RT @politico: Vote NOW 🗳️ https://t.co/abc #vote",
    "unknown\U0001F8FFglyph 🫨 and 🯅 symbol",
]


def main():
    with open("preprocess_golden.jsonl", "w", encoding="utf-8") as f:
        for text in CASES:
            row = {"input": text, "expected": preprocess(text)}
            f.write(json.dumps(row, ensure_ascii=False) + "\n")


if __name__ == "__main__":
    main()
