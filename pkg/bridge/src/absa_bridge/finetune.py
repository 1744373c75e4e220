"""Teacher-forced NLL fine-tuning over input<TAB>target pairs files."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import torch

from .config import BridgeConfig


@dataclass(frozen=True)
class FinetuneResult:
    checkpoint: str
    losses: list[float]


def read_pairs(path: str | Path) -> list[tuple[str, str]]:
    pairs = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"{path}:{line_no}: expected input<TAB>target")
        pairs.append((parts[0], parts[1]))
    if not pairs:
        raise ValueError(f"{path}: no pairs")
    return pairs


def _batches(pairs: list[tuple[str, str]], size: int):
    for start in range(0, len(pairs), size):
        yield pairs[start : start + size]


def finetune(
    config: BridgeConfig,
    pairs_file: str | Path,
    out_dir: str | Path,
    seed: int = 0,
) -> FinetuneResult:
    """Minimize the target negative log-likelihood over the pairs file.

    Batches follow file order (no shuffling) so runs are reproducible;
    the per-step loss trace is written next to the checkpoint.  With
    epochs=0 the base checkpoint is copied unchanged.
    """
    from transformers import AutoModelForSeq2SeqLM, AutoTokenizer

    torch.manual_seed(seed)
    tokenizer = AutoTokenizer.from_pretrained(config.checkpoint)
    model = AutoModelForSeq2SeqLM.from_pretrained(config.checkpoint)
    model.to(config.device)
    out_dir = Path(out_dir)

    losses: list[float] = []
    if config.epochs > 0:
        pairs = read_pairs(pairs_file)
        optimizer = torch.optim.AdamW(model.parameters(), lr=config.learning_rate)
        model.train()
        try:
            for _ in range(config.epochs):
                for batch in _batches(pairs, config.batch_size):
                    enc = tokenizer(
                        [p[0] for p in batch],
                        padding=True,
                        truncation=True,
                        max_length=config.max_length,
                        return_tensors="pt",
                    ).to(config.device)
                    target = tokenizer(
                        [p[1] for p in batch],
                        padding=True,
                        truncation=True,
                        max_length=config.max_length,
                        return_tensors="pt",
                    ).to(config.device)
                    labels = target.input_ids.masked_fill(
                        target.attention_mask == 0, -100
                    )
                    optimizer.zero_grad()
                    loss = model(
                        input_ids=enc.input_ids,
                        attention_mask=enc.attention_mask,
                        labels=labels,
                    ).loss
                    loss.backward()
                    optimizer.step()
                    losses.append(float(loss.item()))
        except (RuntimeError, MemoryError) as exc:
            partial = out_dir.with_name(out_dir.name + "-partial")
            partial.mkdir(parents=True, exist_ok=True)
            model.save_pretrained(partial)
            tokenizer.save_pretrained(partial)
            raise RuntimeError(
                f"training aborted ({exc}); partial checkpoint saved to {partial}"
            ) from exc
        model.eval()

    out_dir.mkdir(parents=True, exist_ok=True)
    model.save_pretrained(out_dir)
    tokenizer.save_pretrained(out_dir)
    (out_dir / "loss_trace.json").write_text(json.dumps(losses), encoding="utf-8")
    return FinetuneResult(checkpoint=str(out_dir), losses=losses)
