"""Command-line entry point for the extraction adapters.

    augforge-adapt detections --images DIR --out detections.jsonl
    augforge-adapt embeddings --kind image|question|noun_prompt|qa_prompt
                              --source PATH --out BASE
    augforge-adapt teachers   --request teacher_request.jsonl --vocab vocab.json
                              --out-id BASE --out-ood BASE [--predictor mod:fn]

All commands accept --backend stub|torchvision|hf-clip (default stub; the
real backends need their checkpoints available locally).
"""

from __future__ import annotations

import argparse
import sys

from .backends import entrypoint_predictor, make_backend
from .extract import extract_detections, extract_embeddings, run_teachers

EMBEDDING_KINDS = ("image", "question", "noun_prompt", "qa_prompt")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="augforge-adapt",
                                     description="Produce augforge input files from models.")
    sub = parser.add_subparsers(dest="command", required=True)

    det = sub.add_parser("detections", help="object detections JSONL from an image directory")
    det.add_argument("--images", required=True)
    det.add_argument("--out", required=True)
    det.add_argument("--backend", default="stub", choices=("stub", "torchvision"))

    emb = sub.add_parser("embeddings", help="embedding matrix + sidecar")
    emb.add_argument("--kind", required=True, choices=EMBEDDING_KINDS)
    emb.add_argument("--source", required=True,
                     help="image dir (image), questions.json (question), detections.jsonl "
                          "(noun_prompt), or qa_prompt_request.jsonl (qa_prompt)")
    emb.add_argument("--out", required=True, help="output basename (writes .f32 and .json)")
    emb.add_argument("--backend", default="stub", choices=("stub", "hf-clip"))
    emb.add_argument("--model", default=None, help="checkpoint name or path for hf-clip")

    tea = sub.add_parser("teachers", help="prediction matrices for the requested pairs")
    tea.add_argument("--request", required=True)
    tea.add_argument("--vocab", required=True)
    tea.add_argument("--out-id", required=True)
    tea.add_argument("--out-ood", required=True)
    tea.add_argument("--backend", default="stub", choices=("stub",))
    tea.add_argument("--predictor", default=None,
                     help="module:function returning (teacher, questions, vocab_size) -> rows")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "detections":
            backend = make_backend(args.backend)
            out = extract_detections(args.images, args.out, backend)
            print(f"detections written to {out}")
        elif args.command == "embeddings":
            kwargs = {}
            if args.backend == "hf-clip" and args.model:
                kwargs["model_name"] = args.model
            backend = make_backend(args.backend, **kwargs)
            out = extract_embeddings(args.kind, args.source, args.out, backend)
            print(f"{args.kind} embeddings written to {out}")
        else:
            backend = make_backend(args.backend)
            predictor = entrypoint_predictor(args.predictor) if args.predictor else None
            out_id, out_ood = run_teachers(args.request, args.vocab, args.out_id, args.out_ood,
                                           backend, predictor=predictor)
            print(f"teacher predictions written to {out_id} and {out_ood}")
    except (ValueError, RuntimeError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
