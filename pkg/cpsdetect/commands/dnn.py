import argparse
from pathlib import Path

from cpsdetect.commands.context import RunContext, load_config
from cpsdetect.schemas.density_net import DensityNetConfig
from cpsdetect.services import density_net_service, log_service


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("train-dnn", help="Train the density net on a normal log")
    parser.add_argument("--config", help="DensityNetConfig JSON (defaults when omitted)")
    parser.add_argument("--train", required=True, help="Normal log CSV")
    parser.add_argument("--out", required=True, help="Model checkpoint output path")
    parser.add_argument("--holdout", help="Held-out normal log monitored after every epoch")
    parser.add_argument("--checkpoint-dir", help="Also save the net after every epoch into this directory")
    parser.set_defaults(handler=train_dnn)

    parser = subparsers.add_parser("score", help="Outlier factor of every log entry")
    parser.add_argument("--model", required=True)
    parser.add_argument("--log", required=True)
    parser.add_argument("--out", required=True, help="Trace CSV output path")
    parser.set_defaults(handler=score)


def train_dnn(args: argparse.Namespace, context: RunContext) -> None:
    config = load_config(context, "density_net", DensityNetConfig, args.config, seed_key="seed")
    train_log = log_service.ingest_csv(context.input(args.train))
    holdout_log = log_service.ingest_csv(context.input(args.holdout)) if args.holdout else None
    net = density_net_service.train(
        config, train_log, holdout_log, checkpoint_dir=args.checkpoint_dir, created_at=context.timestamp
    )
    if args.checkpoint_dir is not None:
        for epoch in range(1, config.epochs + 1):
            context.output(Path(args.checkpoint_dir) / f"epoch_{epoch:03d}.bin")
    density_net_service.save(net, context.output(args.out), created_at=context.timestamp)


def score(args: argparse.Namespace, context: RunContext) -> None:
    net = density_net_service.load(context.input(args.model))
    log = log_service.ingest_csv(context.input(args.log))
    trace = density_net_service.score(net, log)
    density_net_service.write_trace(trace, context.output(args.out))
