"""Greedy decoding and coercion of generations into the response grammar.

The served response format is

    "POIs": [Name, Other Name], "traveling cost": [1.3 kilometers]

Free-running generation is never trusted to produce that exactly. Instead
the decoded token stream is scanned for the two bracketed fields, category
names are matched case-insensitively against the known vocabulary (anything
else is dropped), the cost is re-parsed as a number, and the response is
re-rendered from the template — so every served output carries both fields
and only in-vocabulary names, whatever the model emitted.
"""

import math

import torch

FALLBACK_COST_KM = 0.0

_NUMERIC_TOKENS = set("0123456789.+-")


def greedy_generate(model, prompt_ids, eos_id: int, max_new_tokens: int) -> list:
    """Argmax continuation of ``prompt_ids``; stops at ``eos_id``.

    The prompt is truncated from the left if it would not fit the model
    window together with ``max_new_tokens`` new positions. Returns only the
    generated ids (without the prompt, including the eos if produced).
    """
    window = model.dims.max_len
    keep = max(1, window - max_new_tokens)
    ids = list(prompt_ids)[-keep:]
    n_prompt = len(ids)
    model.eval()
    with torch.no_grad():
        for _ in range(max_new_tokens):
            x = torch.tensor([ids[-window:]], dtype=torch.long)
            logits = model(x)[0, -1]
            next_id = int(torch.argmax(logits).item())
            ids.append(next_id)
            if next_id == eos_id:
                break
    return ids[n_prompt:]


def bracket_segments(tokens, marker: str) -> list:
    """Token runs of the first ``[...]`` group following ``marker``.

    Returns the comma-separated segments inside the brackets, each a list of
    tokens, or ``[]`` when the marker or its bracket is absent. An unclosed
    bracket is read to the end of the stream.
    """
    lowered = [t.casefold() for t in tokens]
    try:
        start = lowered.index(marker.casefold())
    except ValueError:
        return []
    try:
        open_at = tokens.index("[", start)
    except ValueError:
        return []
    segments, current = [], []
    for token in tokens[open_at + 1 :]:
        if token == "]":
            break
        if token == ",":
            segments.append(current)
            current = []
        else:
            current.append(token)
    segments.append(current)
    return [s for s in segments if s]


class ResponseTemplater:
    """Rebuilds canonical responses from decoded token streams."""

    def __init__(self, category_names):
        self.category_names = tuple(category_names)
        self._canonical = {name.casefold(): name for name in self.category_names}

    def extract(self, tokens) -> tuple:
        """(category names, cost_km) found in ``tokens``.

        Unknown names are dropped, duplicates collapse to the first mention,
        and an unusable cost falls back to ``FALLBACK_COST_KM``.
        """
        tokens = list(tokens)
        names = []
        for segment in bracket_segments(tokens, "pois"):
            name = self._canonical.get(" ".join(segment).casefold())
            if name is not None and name not in names:
                names.append(name)
        cost = FALLBACK_COST_KM
        for segment in bracket_segments(tokens, "cost"):
            digits = "".join(t for t in segment if t in _NUMERIC_TOKENS)
            try:
                value = float(digits)
            except ValueError:
                continue
            if math.isfinite(value) and value >= 0.0:
                cost = value
            break
        return names, cost

    @staticmethod
    def render(names, cost_km: float) -> str:
        if not (math.isfinite(cost_km) and cost_km >= 0.0):
            cost_km = FALLBACK_COST_KM
        return (
            f'"POIs": [{", ".join(names)}], '
            f'"traveling cost": [{cost_km:.1f} kilometers]'
        )

    def coerce(self, tokens) -> str:
        names, cost = self.extract(tokens)
        return self.render(names, cost)
