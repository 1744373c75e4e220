"""FastAPI service exposing a seq2seq checkpoint behind the /v1 protocol.

    POST /v1/score      {"input", "target"} -> {"logprob_sum", "tokens"}
    POST /v1/next_token {"input", "prefix_ids", "allowed_ids"} -> {"id", "logprob"}
    GET  /v1/info       -> {"tokenizer_artifact", "model_name"}

The bridge holds no pipeline logic: it scores text pairs and picks the
argmax next token within the caller-supplied allowed set (greedy).  Model
access is serialized behind a lock; responses are independent of request
arrival order.
"""

from __future__ import annotations

import threading

import torch
import torch.nn.functional as F
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .config import BridgeConfig


class ScoreRequest(BaseModel):
    input: str
    target: str


class ScoreResponse(BaseModel):
    logprob_sum: float
    tokens: int


class NextTokenRequest(BaseModel):
    input: str
    prefix_ids: list[int] = Field(default_factory=list)
    allowed_ids: list[int]


class NextTokenResponse(BaseModel):
    id: int
    logprob: float


class InfoResponse(BaseModel):
    tokenizer_artifact: str
    model_name: str


class ModelRunner:
    """Loads the checkpoint once and serializes forward passes."""

    def __init__(self, config: BridgeConfig):
        from transformers import AutoModelForSeq2SeqLM, AutoTokenizer

        self.config = config
        self.tokenizer = AutoTokenizer.from_pretrained(config.checkpoint)
        self.model = AutoModelForSeq2SeqLM.from_pretrained(config.checkpoint)
        self.model.to(config.device)
        self.model.eval()
        self._lock = threading.Lock()
        self.eos_id = self.tokenizer.eos_token_id
        self.start_id = self.model.config.decoder_start_token_id
        if self.start_id is None:
            self.start_id = self.model.config.pad_token_id
        self.vocab_size = self.model.get_input_embeddings().num_embeddings

    def _encode(self, text: str, add_eos: bool) -> list[int]:
        ids = self.tokenizer(text, add_special_tokens=False).input_ids
        ids = ids[: self.config.max_length - 1]
        if add_eos and (not ids or ids[-1] != self.eos_id):
            ids.append(self.eos_id)
        return ids

    def score(self, input_text: str, target_text: str) -> tuple[float, int]:
        input_ids = self._encode(input_text, add_eos=True)
        labels = self._encode(target_text, add_eos=True)
        with self._lock, torch.no_grad():
            logits = self.model(
                input_ids=torch.tensor([input_ids], device=self.config.device),
                labels=torch.tensor([labels], device=self.config.device),
            ).logits
            logprobs = F.log_softmax(logits[0], dim=-1)
            total = sum(logprobs[t, token].item() for t, token in enumerate(labels))
        return total, len(labels)

    def next_token(self, input_text: str, prefix_ids: list[int], allowed_ids: list[int]) -> tuple[int, float]:
        input_ids = self._encode(input_text, add_eos=True)
        decoder_ids = [self.start_id] + list(prefix_ids)
        decoder_ids = decoder_ids[-self.config.max_length:]
        with self._lock, torch.no_grad():
            logits = self.model(
                input_ids=torch.tensor([input_ids], device=self.config.device),
                decoder_input_ids=torch.tensor([decoder_ids], device=self.config.device),
            ).logits
            logprobs = F.log_softmax(logits[0, -1], dim=-1)
            allowed = sorted(set(allowed_ids))
            values = [logprobs[i].item() for i in allowed]
            best = max(range(len(allowed)), key=lambda k: values[k])
        return allowed[best], values[best]


def create_app(config: BridgeConfig) -> FastAPI:
    runner = ModelRunner(config)
    app = FastAPI(title="absa-model-bridge")
    app.state.runner = runner

    @app.post("/v1/score", response_model=ScoreResponse)
    def score(request: ScoreRequest):
        if not request.input.strip() or not request.target.strip():
            raise HTTPException(status_code=400, detail="input and target must be non-empty")
        try:
            logprob_sum, tokens = runner.score(request.input, request.target)
        except HTTPException:
            raise
        except Exception as exc:
            raise HTTPException(status_code=500, detail=f"model failure: {exc}") from exc
        return ScoreResponse(logprob_sum=logprob_sum, tokens=tokens)

    @app.post("/v1/next_token", response_model=NextTokenResponse)
    def next_token(request: NextTokenRequest):
        if not request.allowed_ids:
            raise HTTPException(status_code=400, detail="allowed_ids must be non-empty")
        bad = [i for i in request.allowed_ids if not 0 <= i < runner.vocab_size]
        if bad:
            raise HTTPException(status_code=400, detail=f"allowed_ids outside vocabulary: {bad[:5]}")
        try:
            token, logprob = runner.next_token(request.input, request.prefix_ids, request.allowed_ids)
        except HTTPException:
            raise
        except Exception as exc:
            raise HTTPException(status_code=500, detail=f"model failure: {exc}") from exc
        return NextTokenResponse(id=token, logprob=logprob)

    @app.get("/v1/info", response_model=InfoResponse)
    def info():
        return InfoResponse(
            tokenizer_artifact=f"hf:{config.checkpoint}", model_name=config.checkpoint
        )

    return app


def serve(config: BridgeConfig) -> None:
    import uvicorn

    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="info")
