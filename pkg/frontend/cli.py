import argparse
import logging
import sys
from typing import Callable, Dict, List, Optional

from pydantic import ValidationError

from frontend.service.fitting_service import FittingService
from frontend.service.gradcheck_service import SUITES, GradcheckService
from frontend.service.training_service import TrainingService, require_dir
from sdfnet.checkpoint import load_checkpoint
from utils.config import RunConfig, flag_overrides, load_run_config, validation_messages
from utils.errors import ContractError
from utils.logger import get_logger, set_level

logger = get_logger(__name__)


# ============ Команды ============

def cmd_train(config: RunConfig, args: argparse.Namespace) -> int:
    with TrainingService(config) as service:
        written = service.train()
    logger.info(f"Обучение завершено: {written['checkpoint']}")
    return 0


def cmd_finetune(config: RunConfig, args: argparse.Namespace) -> int:
    with TrainingService(config) as service:
        written = service.finetune(args.checkpoint or config.paths.checkpoint)
    logger.info(f"Дообучение завершено: {written['checkpoint']}")
    return 0


def cmd_extract(config: RunConfig, args: argparse.Namespace) -> int:
    with FittingService(config, args.checkpoint) as service:
        written = service.extract(args.latent)
    logger.info(f"Сетка записана: {written['mesh']}")
    return 0


def cmd_render(config: RunConfig, args: argparse.Namespace) -> int:
    with FittingService(config, args.checkpoint) as service:
        written = service.render(args.latent, args.camera)
    logger.info(f"Силуэт записан: {written['image']}")
    return 0


def _target(config: RunConfig, args: argparse.Namespace) -> str:
    target = args.target or config.paths.target
    if not target:
        raise ContractError("Не задан целевой файл: укажите --target или paths.target")
    return target


def cmd_fit_chamfer(config: RunConfig, args: argparse.Namespace) -> int:
    with FittingService(config, args.checkpoint) as service:
        service.fit_chamfer(_target(config, args), args.latent)
    return 0


def cmd_fit_silhouette(config: RunConfig, args: argparse.Namespace) -> int:
    with FittingService(config, args.checkpoint) as service:
        service.fit_silhouette(_target(config, args), args.camera, args.latent)
    return 0


def cmd_optimize_drag(config: RunConfig, args: argparse.Namespace) -> int:
    with FittingService(config, args.checkpoint) as service:
        service.optimize_drag(args.latent)
    return 0


def cmd_evaluate(config: RunConfig, args: argparse.Namespace) -> int:
    if not args.pred:
        raise ContractError("Не задана предсказанная сетка: укажите --pred")
    with FittingService(config, args.checkpoint) as service:
        result = service.evaluate(args.pred, _target(config, args), args.normalize)
    print(result["metrics"].to_json_line())
    return 0


def cmd_bench_extract(config: RunConfig, args: argparse.Namespace) -> int:
    resolutions = args.resolutions or [config.grid.resolution]
    with FittingService(config, args.checkpoint) as service:
        service.bench_extract(resolutions, args.step, args.latent)
    return 0


def cmd_gradcheck(config: RunConfig, args: argparse.Namespace) -> int:
    out_dir = require_dir(config.paths.out_dir)
    net, latents, _ = load_checkpoint(args.checkpoint or config.paths.checkpoint)
    with GradcheckService(net, latents, config.seed) as service:
        report = service.run(args.suites or SUITES)
        service.write_report(out_dir / "report.json", report)
    for name, suite in report["suites"].items():
        worst = suite["worst_relative_error"]
        worst_text = "nan" if worst is None else f"{worst:.3e}"
        status = "ok" if suite["passed"] else "FAIL"
        print(f"{name}: {worst_text} (допуск {suite['tolerance']:.0e}) {status}")
    if not report["passed"]:
        logger.error("Проверка градиентов не пройдена")
        return 1
    return 0


COMMANDS: Dict[str, Callable[[RunConfig, argparse.Namespace], int]] = {
    "train": cmd_train,
    "extract": cmd_extract,
    "render": cmd_render,
    "fit-chamfer": cmd_fit_chamfer,
    "fit-silhouette": cmd_fit_silhouette,
    "optimize-drag": cmd_optimize_drag,
    "finetune": cmd_finetune,
    "evaluate": cmd_evaluate,
    "bench-extract": cmd_bench_extract,
    "gradcheck": cmd_gradcheck,
}


# ============ Разбор аргументов ============

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON файл конфигурации")
    common.add_argument("--seed", type=int)
    common.add_argument("--res", type=int, help="Разрешение сетки N")
    common.add_argument("--iters", type=int, help="Шаги обучения (train) или итерации Adam")
    common.add_argument("--workers", type=int)
    common.add_argument("--out", help="Каталог вывода (должен существовать)")
    common.add_argument("--log-level", help="Переопределяет MESHSDF_LOG")

    parser = argparse.ArgumentParser(prog="meshsdf", description="Дифференцируемое извлечение изоповерхностей")
    commands = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub = commands.add_parser(name, parents=[common])
        if name != "train":
            sub.add_argument("--checkpoint", help="Чекпоинт сети (по умолчанию paths.checkpoint)")
        if name in ("extract", "render", "fit-chamfer", "fit-silhouette", "optimize-drag", "bench-extract"):
            sub.add_argument("--latent", help="Индекс кода в таблице или JSON файл со списком чисел")
        if name in ("fit-chamfer", "fit-silhouette", "evaluate"):
            sub.add_argument("--target", help="Целевой OBJ или PGM")
        if name in ("render", "fit-silhouette"):
            sub.add_argument("--camera", help="JSON файл камеры")
        if name == "evaluate":
            sub.add_argument("--pred", help="Предсказанная сетка OBJ")
            sub.add_argument("--normalize", choices=("unit_sphere", "unit_box"))
        if name == "bench-extract":
            sub.add_argument("--resolutions", type=int, nargs="+")
            sub.add_argument("--step", type=float, default=0.05, help="Длина шага по z")
        if name == "gradcheck":
            sub.add_argument("--suites", nargs="+", choices=SUITES)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.log_level:
        set_level(args.log_level)

    try:
        overrides = flag_overrides(args.seed, args.res, args.iters, args.workers, args.out,
                                   train_steps=args.command == "train")
        config = load_run_config(args.config, overrides)
    except ValidationError as e:
        for line in validation_messages(e):
            print(f"config error: {line}", file=sys.stderr)
        return 1
    except ValueError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1

    logger.info(f"Команда {args.command}: seed={config.seed}, N={config.grid.resolution}")
    try:
        return COMMANDS[args.command](config, args)
    except (ValueError, OSError) as e:
        logger.error(f"Ошибка команды {args.command}: {e}", exc_info=logger.isEnabledFor(logging.DEBUG))
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
