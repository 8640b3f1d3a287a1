"""Regenerates crates/core/data/english.txt from wordfreq's English list.

Common romanized Hindi/Kannada/Tamil/... function words that also appear in
web English frequency lists are dropped so they do not count as English.
"""
import re
import sys
from pathlib import Path

from wordfreq import top_n_list

SIZE = 10000
ROMANIZED = set("""
ek hai hain ka ki ke se ko mein ye yeh wo woh vo tho toh nu na ne bhi kya kar
karo karna kare jo aur tha thi raha rahe rahi nahi nhi jab sab kuch koi haan ji
ga gi ge de di diya liya aa ja jaa la ra ta ya yaa ni ba sa pa ma da wala wali
wale ondu eradu mattu alli illa beku antha idu adu ella mele kelage oru athu
ithu illai enna ennu vandu
""".split())

# Programming vocabulary that a 10k general list misses.
EXTRA = set("""
anagram boolean substring subarray integer integers fibonacci palindrome
iterate iterates iterating iteration recursion recursive recursively
parameter parameters argument arguments variable variables element elements
array arrays tuple tuples dictionary boolean nested matrix matrices
lowercase uppercase alphabet alphabetical vowel vowels consonant consonants
divisible divisor remainder modulo factorial prime primes nonzero
ascending descending boolean iterable loop loops inclusive exclusive
""".split())


def main(out: Path) -> None:
    words = []
    for w in top_n_list("en", SIZE):
        if not re.fullmatch(r"[a-z]+(?:'[a-z]+)?", w):
            continue
        if len(w) == 1 and w not in ("a", "i"):
            continue
        if w in ROMANIZED:
            continue
        words.append(w)
    words.extend(EXTRA)
    out.write_text("".join(w + "\n" for w in sorted(set(words))), encoding="utf-8")
    print(f"{len(words)} words -> {out}")


if __name__ == "__main__":
    main(Path(sys.argv[1] if len(sys.argv) > 1 else "crates/core/data/english.txt"))
