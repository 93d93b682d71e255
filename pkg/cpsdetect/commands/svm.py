import argparse

from cpsdetect.commands.context import RunContext, load_config
from cpsdetect.schemas.svm import SvmConfig
from cpsdetect.services import log_service, svm_service


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("train-svm", help="Train the one-class SVM on a normal log")
    parser.add_argument("--config", help="SvmConfig JSON (defaults when omitted)")
    parser.add_argument("--train", required=True, help="Normal log CSV")
    parser.add_argument("--out", required=True, help="Model file output path")
    parser.set_defaults(handler=train_svm)

    parser = subparsers.add_parser("predict", help="Normal/Abnormal verdict for every window of a log")
    parser.add_argument("--model", required=True)
    parser.add_argument("--log", required=True)
    parser.add_argument("--out", required=True, help="Verdict CSV output path")
    parser.set_defaults(handler=predict)


def train_svm(args: argparse.Namespace, context: RunContext) -> None:
    config = load_config(context, "svm", SvmConfig, args.config)
    log = log_service.ingest_csv(context.input(args.train))
    windows = svm_service.prepare_windows(log, config.w, config.encoding)
    model = svm_service.train_svm(config, windows, schema=log.schema)
    svm_service.save(model, context.output(args.out), created_at=context.timestamp)


def predict(args: argparse.Namespace, context: RunContext) -> None:
    model = svm_service.load(context.input(args.model))
    log = log_service.ingest_csv(context.input(args.log))
    svm_service.check_model_schema(model, log)
    windows = svm_service.prepare_windows(log, model.w, model.encoding)
    prediction = svm_service.predict(model, windows)
    svm_service.write_verdicts(prediction, context.output(args.out))
