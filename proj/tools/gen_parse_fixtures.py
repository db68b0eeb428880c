#!/usr/bin/env python3
"""Write the labeled parser fixture corpus (tests/fixtures/parse_fixtures.jsonl).

Each line: {"schema", "context", "response", "expected"}. Labels are set by the
generating template, so each phrasing below is also its own label.
"""
import json
import random
import sys
from pathlib import Path

N = 200
rng = random.Random(20240611)

LIKERT = ["Strongly Agree", "Agree", "Neither Agree nor Disagree", "Disagree", "Strongly Disagree"]
ASSIST = ["Significantly Increased", "Slightly Increased", "No Change", "Slightly Decreased",
          "Significantly Decreased"]
LIKERT_ALT = {
    "Strongly Agree": ["Agree strongly", "Completely agree", "strongly agree", "STRONGLY AGREE", "Totally agree"],
    "Agree": ["I agree", "agree", "Mostly agree", "Somewhat agree"],
    "Neither Agree nor Disagree": ["Neutral", "Neither agree or disagree", "neither agree nor disagree", "Undecided"],
    "Disagree": ["I disagree", "disagree", "Somewhat disagree", "Mostly disagree"],
    "Strongly Disagree": ["Disagree strongly", "Completely disagree", "strongly disagree", "Totally disagree"],
}
ASSIST_ALT = {
    "Significantly Increased": ["Increase significantly", "significantly increased", "Greatly increased"],
    "Slightly Increased": ["Increase slightly", "slightly increased", "Slightly increase"],
    "No Change": ["Unchanged", "no change", "Keep the same"],
    "Slightly Decreased": ["Decrease slightly", "slightly decreased", "Slightly decrease"],
    "Significantly Decreased": ["Decrease significantly", "significantly decreased", "Greatly decreased"],
}

THINK = [
    "",
    "<think>Let me weigh both sides carefully before answering.</think>\n",
    "<think>\nThe expected values differ a bit. I should just pick one.\n</think>\n\n",
]


def wrap(ans):
    style = rng.randrange(7)
    if style == 0:
        return ans
    if style == 1:
        return f"Answer: {ans}"
    if style == 2:
        return f"**{ans}**"
    if style == 3:
        return f"{ans}."
    if style == 4:
        return f"After considering the options, my answer is:\n\n{ans}"
    if style == 5:
        return f"\"{ans}\""
    return f"Final answer: {ans}"


def emit(out, schema, context, response, expected):
    out.append({"schema": schema, "context": context,
                "response": rng.choice(THINK) + response, "expected": expected})


def binary_choice(out):
    pairs = [("you receive $100 today.", "you receive $105 tomorrow."),
             ("with 80% chance, you receive $40; with 20% chance, you receive $0.", "you receive $30."),
             ("a week at the beach.", "a week in the mountains."),
             ("you receive $50 today.", "you receive $60 in one week.")]
    fails = ["I cannot decide between these", "Both options have merit.", "Either A or B would be fine.",
             "I'd rather not choose.", "A and B are equally attractive, but I lean toward A... or B."]
    for i in range(N):
        opts = list(rng.choice(pairs))
        ctx = {"options": opts}
        r = rng.random()
        if r < 0.08:
            emit(out, "binary_choice", ctx, rng.choice(fails), "FAILED")
            continue
        label = rng.choice(["A", "B", "A", "B", "Indifferent"])
        k = rng.randrange(8)
        if label == "Indifferent":
            resp = rng.choice(["Indifferent", "Answer: Indifferent", "I am indifferent.",
                               "I'm indifferent between the two options.", "**Indifferent**"])
        elif k < 3:
            resp = wrap(label)
        elif k == 3:
            resp = f"Option {label}"
        elif k == 4:
            resp = f"I choose Option {label}."
        elif k == 5:
            resp = f"I would go with {label}."
        elif k == 6:
            resp = f"My choice is {label}: {opts[0 if label == 'A' else 1]}"
        else:
            resp = opts[0 if label == "A" else 1]
        emit(out, "binary_choice", ctx, resp, label)


def risk_options():
    s = rng.choice([10, 20, 50, 100])
    p = rng.choice([30, 35, 40, 45, 55, 60, 65, 70])
    g = int(s * 1.1 / (p / 100) + 0.5)
    tpl = rng.randrange(3)
    if tpl == 0:
        opts = [f"Gamble: {p}% chance to receive ${g}; otherwise $0", f"Receive ${s} for certain."]
    elif tpl == 1:
        opts = [f"Lottery: win ${g} with probability {p}%, otherwise nothing.", f"Take ${s} guaranteed."]
    else:
        opts = ["Known urn (50/50): 25 RED + 25 BLACK. Win $20 if RED is drawn; otherwise $0.",
                "Unknown urn: 50 balls; red/black ratio unspecified. Win $20 if RED is drawn; otherwise $0."]
    if rng.random() < 0.5:
        opts.reverse()
    return opts


def option_echo(out):
    fails = ["I would rather think about it more.", "Both are reasonable choices.",
             "It depends on my risk tolerance.", "Option 3", "Neither option appeals to me."]
    for i in range(N):
        opts = risk_options()
        ctx = {"options": opts}
        if rng.random() < 0.08:
            emit(out, "option_echo", ctx, rng.choice(fails), "FAILED")
            continue
        k = rng.randrange(2)
        text = opts[k]
        style = rng.randrange(8)
        if style < 3:
            resp = text
        elif style == 3:
            resp = wrap(text.rstrip("."))
        elif style == 4:
            resp = text.upper()
        elif style == 5:
            resp = f"{k + 1}"
        elif style == 6:
            resp = f"Option {k + 1}"
        else:
            resp = f"I pick: {text}"
        emit(out, "option_echo", ctx, resp, k)


def accept_reject(out):
    fails = ["It is hard to say.", "Maybe.", "I accept the risk but I will reject the offer.",
             "Depends on my mood."]
    acc = ["ACCEPT", "Accept", "accept", "I accept.", "I will accept the offer.", "ACCEPT the coin-flip gamble.",
           "Accepted.", "My decision: ACCEPT"]
    rej = ["REJECT", "Reject", "reject", "I reject.", "I will reject this offer.", "REJECT; take $0 for certain.",
           "I decline.", "I would not accept this.", "I don't accept."]
    for i in range(N):
        if rng.random() < 0.07:
            emit(out, "accept_reject", {}, rng.choice(fails), "FAILED")
            continue
        if rng.random() < 0.5:
            resp, lab = rng.choice(acc), "ACCEPT"
        else:
            resp, lab = rng.choice(rej), "REJECT"
        if rng.random() < 0.3:
            resp = wrap(resp)
        emit(out, "accept_reject", {}, resp, lab)


def labeled_scale(out, schema, labels, alts):
    fails = ["I have no opinion on this.", "It depends on the circumstances.", "Yes.", "No.",
             "Agree and disagree in equal measure; Strongly Agree on some days."]
    for i in range(N):
        ctx = {"order": rng.choice(["A2D", "D2A"])} if schema == "likert" else {}
        if rng.random() < 0.07:
            emit(out, schema, ctx, rng.choice(fails), "FAILED")
            continue
        idx = rng.randrange(5)
        label = labels[idx]
        style = rng.randrange(6)
        if style < 2:
            resp = label
        elif style == 2:
            resp = wrap(label)
        elif style == 3:
            resp = rng.choice(alts[label])
        elif style == 4:
            resp = f"{label}\n\nThe situation described warrants this response."
        else:
            resp = f"Considering the case, I choose: {label}"
        emit(out, schema, ctx, resp, 5 - idx)


def price(out):
    fails = ["about ten dollars", "Price: $NN", "I would not sell it.", "It is priceless.", "Ten bucks."]
    for i in range(N):
        if rng.random() < 0.08:
            emit(out, "price", {}, rng.choice(fails), "FAILED")
            continue
        cents = rng.random() < 0.25
        v = round(rng.uniform(1, 60), 2) if cents else rng.randrange(0, 80)
        s = f"{v:.2f}" if cents else str(v)
        style = rng.randrange(5)
        if style < 2:
            resp = f"Price: ${s}"
        elif style == 2:
            resp = f"price: ${s}"
        elif style == 3:
            resp = f"Considering the item's condition and usefulness:\n\nPrice: ${s}"
        else:
            resp = f"**Price: ${s}**"
        emit(out, "price", {}, resp, float(s))


def give_amount(out):
    fails = ["I'd rather keep everything to myself, nothing to say.", "Some of it.", "Half, roughly."]
    for i in range(N):
        t = rng.randrange(5, 16)
        ctx = {"allowed_max": t}
        r = rng.random()
        if r < 0.05:
            emit(out, "give_amount", ctx, rng.choice(fails), "FAILED")
            continue
        if r < 0.10:
            emit(out, "give_amount", ctx, rng.choice([f"${t + 3}", f"I will give ${t + 1}.", "$2.50"]),
                 "OUT_OF_RANGE")
            continue
        g = rng.randrange(0, t + 1)
        style = rng.randrange(6)
        if style < 2:
            resp = f"${g}"
        elif style == 2:
            resp = f"I will give ${g}."
        elif style == 3:
            resp = wrap(f"${g}")
        elif style == 4:
            resp = f"{g}"
        else:
            resp = f"Give ${g} to the other player and keep ${t - g}."
        emit(out, "give_amount", ctx, resp, g)


def main():
    out = []
    binary_choice(out)
    option_echo(out)
    accept_reject(out)
    labeled_scale(out, "likert", LIKERT, LIKERT_ALT)
    labeled_scale(out, "assistance", ASSIST, ASSIST_ALT)
    price(out)
    give_amount(out)
    dest = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "tests/fixtures/parse_fixtures.jsonl"
    with open(dest, "w", encoding="utf-8") as f:
        for row in out:
            f.write(json.dumps(row, ensure_ascii=False) + "\n")
    print(f"{len(out)} fixtures -> {dest}")


if __name__ == "__main__":
    main()
