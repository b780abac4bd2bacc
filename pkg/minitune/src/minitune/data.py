"""Instruction-tuning dataset: JSONL loading and token-level encoding.

Each line of the dataset file is a JSON object with exactly the string keys
``instruction``, ``input``, and ``output``. Anything else — a blank line, a
non-object, a missing/extra key, a non-string value — is rejected with the
1-based line number in the error message so bad exports are easy to locate.
"""

import json
from dataclasses import dataclass

from .errors import DataFormatError
from .tokenizer import WordTokenizer

REQUIRED_KEYS = ("instruction", "input", "output")


@dataclass(frozen=True)
class Sample:
    """One supervised example, stored as raw text."""

    instruction: str
    input_text: str
    output_text: str

    def prompt_text(self) -> str:
        return self.instruction + "\n" + self.input_text


def load_jsonl(path) -> list:
    """Read and validate a dataset file; returns a list of :class:`Sample`."""
    samples = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                raise DataFormatError(f"line {line_no}: blank line")
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(
                    f"line {line_no}: invalid JSON ({exc.msg})"
                ) from None
            if not isinstance(record, dict):
                raise DataFormatError(
                    f"line {line_no}: expected a JSON object, "
                    f"got {type(record).__name__}"
                )
            missing = [k for k in REQUIRED_KEYS if k not in record]
            if missing:
                raise DataFormatError(
                    f"line {line_no}: missing key(s): {', '.join(missing)}"
                )
            extra = sorted(set(record) - set(REQUIRED_KEYS))
            if extra:
                raise DataFormatError(
                    f"line {line_no}: unknown key(s): {', '.join(extra)}"
                )
            for key in REQUIRED_KEYS:
                if not isinstance(record[key], str):
                    raise DataFormatError(
                        f"line {line_no}: {key!r} must be a string, "
                        f"got {type(record[key]).__name__}"
                    )
            samples.append(
                Sample(record["instruction"], record["input"], record["output"])
            )
    return samples


@dataclass(frozen=True)
class EncodedSample:
    """Token ids for one sample plus the prompt/response boundary.

    ``ids`` is ``<bos> prompt <sep> response <eos>``; the response span is
    ``ids[prompt_len:]``, i.e. everything after the separator.
    """

    ids: tuple
    prompt_len: int

    @property
    def n_tokens(self) -> int:
        return len(self.ids)


def encode_sample(sample: Sample, tokenizer: WordTokenizer) -> EncodedSample:
    prompt = (
        [tokenizer.bos_id]
        + tokenizer.encode(sample.instruction)
        + tokenizer.encode(sample.input_text)
        + [tokenizer.sep_id]
    )
    response = tokenizer.encode(sample.output_text) + [tokenizer.eos_id]
    return EncodedSample(ids=tuple(prompt + response), prompt_len=len(prompt))
