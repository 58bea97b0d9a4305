"""
The radd subcommands: verify, train, sample, eval, enfe.

Every command reads a RunConfig, writes its artifacts under config.out next
to a copy of the resolved config, and prints a short summary on stdout.
"""

import json
import math
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from radd.config import RunConfig, save_resolved_config
from radd.contracts import DataSplit, EstimatorKind, SamplerMethod
from radd.corpus import decode_block
from radd.diffusion.space import SequenceState, Vocab
from radd.errors import ConfigError
from radd.evaluation import expected_exact_loss, nfe_summary, perplexity, sample_tv, unigram_entropy, write_report
from radd.losses import MAX_EXACT_D
from radd.models import load_checkpoint, save_checkpoint
from radd.sampler import StepGrid, ao_sample, enfe_sweep, nfe_stats, sample
from radd.trainer import Trainer, write_metrics
from radd.verification import run_verification

from .base_command import EXIT_OK, EXIT_VERIFICATION_FAILED, BaseCommand
from .resources import Problem, build_kernel, build_problem, resolve_model, resolve_prompt


# enumeration budget for the H(p0)-style expected loss printed after training
_MAX_EXPECTED_WORK = 2_000_000


def _print_json(payload: Dict[str, Any]) -> None:
    print(json.dumps(payload, indent=2, default=str))


def _cache_flag(value: Optional[str]) -> Optional[bool]:
    if value is None:
        return None
    return value == "on"


# =====================================================================
# VERIFY
# =====================================================================

class VerifyCommand(BaseCommand):
    """Run the oracle suite and print a PASS/FAIL table."""

    name = "verify"

    def execute(self, config: RunConfig) -> int:
        report = run_verification(names=self.args.only, perturb_score_scale=self.args.perturb_score_scale)

        if self.args.json:
            print(report.model_dump_json(indent=2))
        else:
            width = max(len(check.name) for check in report.checks)
            for check in report.checks:
                status = "PASS" if check.passed else "FAIL"
                print(f"{status}  {check.name:<{width}}  error={check.error:.3e}  tol={check.tolerance:.0e}  "
                      f"({check.elapsed_s:.2f}s)")
            print(f"{len(report.checks) - len(report.failed)}/{len(report.checks)} checks passed "
                  f"in {report.elapsed_s:.1f}s")

        if self.args.out is not None:
            out = Path(config.out)
            out.mkdir(parents=True, exist_ok=True)
            (out / "verify.json").write_text(report.model_dump_json(indent=2), encoding="utf-8")

        if not report.passed:
            self.logger.warning(f"Failed checks: {[check.name for check in report.failed]}")
            return EXIT_VERIFICATION_FAILED
        return EXIT_OK


# =====================================================================
# TRAIN
# =====================================================================

class TrainCommand(BaseCommand):
    """Train a model; writes model.json, model_ema.json, metrics.csv and config.json."""

    name = "train"

    def flag_overrides(self) -> Dict[str, Any]:
        return {"train.seed": self.args.seed, "train.loss": self.args.loss, "train.steps": self.args.steps}

    def execute(self, config: RunConfig) -> int:
        if config.data is None:
            raise ConfigError("training needs a data section", key_path="data")
        problem = build_problem(config.data)
        model, problem = resolve_model(config, problem)
        kernel = build_kernel(config, problem.vocab)

        out = Path(config.out)
        save_resolved_config(config, out)
        trainer = Trainer(
            model,
            problem.source(),
            config.train,
            kernel=kernel,
            monitor_size=config.data.monitor_size,
            threads=self.settings.threads,
        )
        result = trainer.run()

        checkpoint = save_checkpoint(result.model, out / "model.json")
        ema_model = load_checkpoint(checkpoint)
        ema_model.set_params(result.ema_params)
        save_checkpoint(ema_model, out / "model_ema.json")
        write_metrics(result.metrics, out / "metrics.csv")

        summary: Dict[str, Any] = {
            "out": str(out),
            "loss": config.train.loss.value,
            "steps": config.train.steps,
            "initial_batch_loss": result.initial_loss,
            "final_batch_loss": float(result.metrics["loss_mc"].iloc[-1]),
            "final_heldout_loss": result.final_heldout_loss,
            "elapsed_s": round(result.elapsed_s, 3),
        }
        table = problem.table
        if table is not None:
            summary["entropy_p0"] = table.entropy()
            if table.d <= MAX_EXACT_D and table.probs.size * 2 ** table.d <= _MAX_EXPECTED_WORK:
                summary["expected_exact_loss"] = expected_exact_loss(result.model, table)
            if result.final_heldout_loss is not None:
                gap = abs(result.final_heldout_loss - summary["entropy_p0"]) / max(summary["entropy_p0"], 1e-12)
                summary["heldout_gap_relative"] = gap
                self.logger.info(f"Held-out loss {result.final_heldout_loss:.4f} vs H(p0) {summary['entropy_p0']:.4f} "
                                 f"({100 * gap:.1f}% apart)")
        _print_json(summary)
        return EXIT_OK


# =====================================================================
# SAMPLE
# =====================================================================

def _sample_lines(sequences: List[List[int]], forced: List[bool], vocab: Vocab) -> List[str]:
    lines = []
    for index, (tokens, fill) in enumerate(zip(sequences, forced)):
        record: Dict[str, Any] = {"index": index, "tokens": tokens, "forced_fill": fill}
        if vocab.n_tokens == 256:
            record["text"] = decode_block(np.asarray(tokens))
        lines.append(json.dumps(record, ensure_ascii=False))
    return lines


class SampleCommand(BaseCommand):
    """Generate sequences; writes samples.jsonl, nfe.csv, sample_report.json and config.json."""

    name = "sample"

    def flag_overrides(self) -> Dict[str, Any]:
        return {
            "sampling.seed": self.args.seed,
            "sampling.cache": _cache_flag(self.args.cache),
            "sampling.steps": self.args.steps,
            "sampling.method": self.args.method,
            "sampling.trajectories": self.args.trajectories,
        }

    def execute(self, config: RunConfig) -> int:
        model, problem = resolve_model(config, build_problem(config.data))
        kernel = build_kernel(config, problem.vocab)
        prompt = resolve_prompt(config, problem)
        sampling = config.sampling

        out = Path(config.out)
        save_resolved_config(config, out)
        if sampling.method is SamplerMethod.AO:
            report = ao_sample(model, problem.d, order=sampling.order, prompt=prompt,
                               trajectories=sampling.trajectories, seed=sampling.seed, threads=self.settings.threads)
        else:
            report = sample(model, kernel, StepGrid.uniform(sampling.steps, kernel.schedule.T), sampling.method,
                            cache=sampling.cache, prompt=prompt, trajectories=sampling.trajectories,
                            seed=sampling.seed, threads=self.settings.threads)

        lines = _sample_lines(report.sequences, report.forced_fill, problem.vocab)
        (out / "samples.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
        generated = problem.d - len(prompt or [])
        nfe_stats(report, max(generated, 1), kernel).to_csv(out / "nfe.csv", index=False)
        (out / "sample_report.json").write_text(report.model_dump_json(indent=2), encoding="utf-8")

        _print_json({
            "out": str(out),
            "method": report.method.value,
            "cache": report.cache,
            "trajectories": len(report.sequences),
            "nfe": nfe_summary(report),
            "forced_fill": sum(report.forced_fill),
            "clamp_events": report.clamp_events,
        })
        return EXIT_OK


# =====================================================================
# EVAL
# =====================================================================

class EvalCommand(BaseCommand):
    """Perplexity (and sample quality); writes eval.json and config.json."""

    name = "eval"

    def flag_overrides(self) -> Dict[str, Any]:
        return {
            "eval.seed": self.args.seed,
            "eval.loss": self.args.loss,
            "eval.estimator": self.args.estimator,
            "sampling.cache": _cache_flag(self.args.cache),
            "sampling.steps": self.args.steps,
        }

    def _dataset(self, config: RunConfig, problem: Problem) -> List[SequenceState]:
        limit = config.eval.max_examples
        if problem.table is not None:
            rows = problem.table.sample_many(np.random.default_rng(config.eval.seed), limit)
        elif problem.corpus is not None:
            rows = problem.corpus.blocks(DataSplit.HELDOUT, seed=config.eval.seed)[:limit]
            if len(rows) == 0:
                self.logger.warning("Corpus has no held-out blocks; evaluating on train blocks")
                rows = problem.corpus.blocks(DataSplit.TRAIN, seed=config.eval.seed)[:limit]
        else:
            raise ConfigError("evaluation needs a data section", key_path="data")
        return [SequenceState(row, problem.vocab) for row in rows]

    def execute(self, config: RunConfig) -> int:
        model, problem = resolve_model(config, build_problem(config.data))
        kernel = build_kernel(config, problem.vocab)
        spec = config.eval
        if spec.estimator is EstimatorKind.EXACT and problem.d > MAX_EXACT_D:
            raise ConfigError(f"exact estimation enumerates 2^d subsets; use mc for d={problem.d}",
                              key_path="eval.estimator")

        out = Path(config.out)
        save_resolved_config(config, out)
        report = perplexity(model, self._dataset(config, problem), loss=spec.loss, estimator=spec.estimator,
                            kernel=kernel, draws=spec.draws, seed=spec.seed, threads=self.settings.threads)

        if spec.tv_trials is not None:
            sampling = config.sampling
            if sampling.method is SamplerMethod.AO:
                samples = ao_sample(model, problem.d, order=sampling.order, trajectories=spec.tv_trials,
                                    seed=spec.seed, threads=self.settings.threads)
            else:
                samples = sample(model, kernel, StepGrid.uniform(sampling.steps, kernel.schedule.T), sampling.method,
                                 cache=sampling.cache, trajectories=spec.tv_trials, seed=spec.seed,
                                 threads=self.settings.threads)
            updates: Dict[str, Any] = {
                "unigram_entropy_nats": unigram_entropy(samples.sequences),
                "nfe_summary": nfe_summary(samples),
            }
            if problem.table is not None:
                updates["tv_distance"] = sample_tv(samples.sequences, problem.table)
            report = report.model_copy(update=updates)

        write_report(report, out / "eval.json", results_csv=spec.results_csv)
        print(report.model_dump_json(indent=2))
        if report.n_examples == 0 or not math.isfinite(report.loss_nats_per_token):
            self.logger.warning("Every evaluated example had infinite loss")
        return EXIT_OK


# =====================================================================
# ENFE
# =====================================================================

class EnfeCommand(BaseCommand):
    """Expected-NFE sweep over uniform grids; writes enfe.csv and config.json."""

    name = "enfe"

    def flag_overrides(self) -> Dict[str, Any]:
        return {
            "enfe.steps": self.args.steps,
            "enfe.lengths": self.args.lengths,
            "enfe.method": self.args.method,
            "enfe.seed": self.args.seed,
            "enfe.trajectories": self.args.trajectories,
        }

    def execute(self, config: RunConfig) -> int:
        spec = config.enfe
        if spec.method is SamplerMethod.AO:
            raise ConfigError("E-NFE is defined for the tweedie and euler samplers", key_path="enfe.method")
        # NFE depends only on the masking dynamics, not on the vocabulary
        kernel = build_kernel(config, Vocab(2))

        out = Path(config.out)
        save_resolved_config(config, out)
        table = enfe_sweep(kernel, spec.steps, spec.lengths, method=spec.method, trajectories=spec.trajectories,
                           seed=spec.seed, threads=self.settings.threads)
        table.to_csv(out / "enfe.csv", index=False)
        print(table.to_string(index=False))
        return EXIT_OK


COMMANDS = {
    command.name: command
    for command in (VerifyCommand, TrainCommand, SampleCommand, EvalCommand, EnfeCommand)
}
