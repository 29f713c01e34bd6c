"""
命令行入口：rbsim <子命令> --config <path> [--out DIR] [--workers N] [--seed S] [--full-scale]
示例:
  rbsim curve --config configs/ou_short.json --out out/
  rbsim validate
  rbsim figure1 --workers 8
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .config_store import Experiment, RunConfig, config_from_dict, load_config, load_settings, resolve_workers
from .errors import ConfigError
from .experiment_engine import run_experiment
from .result_store import load_run

logger = logging.getLogger("rbsim")

SUBCOMMAND_HELP = {
    Experiment.CURVE: "计算一条生存概率衰减曲线",
    Experiment.FCOEF: "计算 F_curr / F_prev 及 f 网格",
    Experiment.FIT: "对已有曲线 CSV 做指数拟合",
    Experiment.COMPARE: "同一配置下比较多种方法",
    Experiment.VALIDATE: "运行不变量自检套件",
    Experiment.FIGURE1: "衰减因子随 τ_c 的扫描",
    Experiment.FIGURE2: "长相关时间下的衰减曲线与 Γ∞ / Γ₀",
    Experiment.SM_VALIDATION: "蒙特卡洛与解析近似对比",
    Experiment.ONE_OVER_F: "1/f 噪声各区间对比",
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rbsim", description="非马尔可夫噪声下的随机基准测试模拟")
    sub = p.add_subparsers(dest="command", required=True, metavar="<子命令>")
    for exp, help_text in SUBCOMMAND_HELP.items():
        sp = sub.add_parser(exp.value, help=help_text, description=help_text)
        sp.add_argument("--config", "-c", help="JSON 配置文件路径（省略时使用默认配置）")
        sp.add_argument("--out", "-o", help="输出目录（默认取配置中的 output_path 或用户设置）")
        sp.add_argument("--workers", "-w", type=int, help="并行进程数（默认取 RBSIM_WORKERS 或用户设置）")
        sp.add_argument("--seed", type=int, help="覆盖配置中的主随机种子")
        sp.add_argument("--full-scale", action="store_true", help="蒙特卡洛使用完整规模 (20000×100)")
        sp.add_argument("--pdf", action="store_true", help="额外生成 PDF 运行摘要（需要 reportlab）")
        sp.add_argument("--no-record", action="store_true", help="不写入运行记录")
        verbosity = sp.add_mutually_exclusive_group()
        verbosity.add_argument("-v", "--verbose", action="store_true", help="输出调试日志")
        verbosity.add_argument("-q", "--quiet", action="store_true", help="只输出警告与错误")
    return p


def _configure_logging(args: argparse.Namespace) -> None:
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(
        level=level,
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def _load(args: argparse.Namespace) -> RunConfig:
    experiment = Experiment(args.command)
    if args.config:
        config = load_config(args.config)
        if config.experiment is not experiment:
            # 子命令优先；重新校验以触发该实验的输入检查
            data = config.model_dump(mode="json", exclude_unset=True)
            data["experiment"] = experiment.value
            config = config_from_dict(data)
    else:
        config = config_from_dict({"experiment": experiment.value})
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError(f"--seed must be >= 0, got {args.seed}")
        config = config.model_copy(update={"seed": args.seed})
    return config


def _out_dir(args: argparse.Namespace, config: RunConfig) -> Path:
    if args.out:
        return Path(args.out)
    if "output_path" in config.model_fields_set:
        return Path(config.output_path)
    return Path(load_settings().output_dir or config.output_path)


def _print_validate(summary: dict) -> None:
    for name, status, detail in summary.get("table", []):
        print(f"  {status}  {name:<28} {detail}")


def main(argv: Optional[List[str]] = None) -> None:
    args = build_parser().parse_args(argv)
    _configure_logging(args)

    try:
        config = _load(args)
        workers = resolve_workers(args.workers)
    except ConfigError as e:
        print("配置错误:", e, file=sys.stderr)
        sys.exit(ConfigError.exit_code)

    out_dir = _out_dir(args, config)
    print(f"正在运行 {args.command} ...", file=sys.stderr)
    result = run_experiment(
        config, out_dir=out_dir, workers=workers, full_scale=args.full_scale, record=not args.no_record
    )

    if args.command == Experiment.VALIDATE.value:
        _print_validate(result.summary)

    if args.pdf and result.run_id:
        from .pdf_report import generate_run_pdf

        record = load_run(out_dir, result.run_id)
        if record is not None:
            err = generate_run_pdf(record, out_dir / f"{result.experiment}-{result.run_id}.pdf")
            if err:
                logger.warning("PDF 生成失败: %s", err)

    if result.success:
        for path in result.files:
            print(path)
        if result.run_id:
            print(f"(运行记录 {result.run_id} 已保存到 {out_dir / 'runs'})", file=sys.stderr)
        return

    print(f"运行失败 ({result.error_kind or 'error'}):", result.error_message, file=sys.stderr)
    sys.exit(result.exit_code or 1)


if __name__ == "__main__":
    main()
