"""
Management command running the planning pipeline or one of its stages
"""
from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from apps.planning.exceptions import PlanningError
from apps.planning.pipeline import STAGES, PlanningPipeline
from apps.planning.serializers import load_config_file
from core.streams import MAX_SEED

EXIT_FAILURE = 2


class Command(BaseCommand):
    help = 'Evolve, cross-evaluate, position and stress-test resource portfolios over a scenario set'

    def add_arguments(self, parser):
        subparsers = parser.add_subparsers(dest='stage', required=True)
        for stage, description in (
            ('run', 'All stages followed by the run manifest'),
            ('solve', 'Per-scenario fronts (front_<j>.csv)'),
            ('crosseval', 'Pool the fronts and evaluate them in every scenario (crosseval.csv)'),
            ('position', 'Robustness, risk and adaptation cost (positioning.csv, best.csv)'),
            ('sensitivity', 'Quartile bands under perturbed probabilities and weights (sensitivity.csv)'),
        ):
            sub = subparsers.add_parser(stage, help=description)
            sub.add_argument('--config', required=True, help='Config document (JSON)')
            sub.add_argument('--out', required=True, help='Output directory')
            sub.add_argument('--seed', type=int, default=None, help='Master seed, overrides PLAN_SEED and the config')
            sub.add_argument('--jobs', type=int, default=None, help='Worker processes')
            sub.add_argument('--trace', action='store_true', help='Dump assignment traces of every front portfolio')

    def resolve_seed(self, config, seed):
        if seed is None:
            seed = settings.PLAN_SEED
        if seed is None:
            return config
        if not 0 <= seed <= MAX_SEED:
            raise CommandError(f'Seed must lie in [0, {MAX_SEED}], got {seed}', returncode=EXIT_FAILURE)
        return config.with_seed(seed)

    def handle(self, *args, **options):
        stage = options['stage']
        jobs = settings.PLANNING['JOBS'] if options['jobs'] is None else options['jobs']
        if jobs < 1:
            raise CommandError(f'--jobs must be >= 1, got {jobs}', returncode=EXIT_FAILURE)

        try:
            config = self.resolve_seed(load_config_file(options['config']), options['seed'])
            pipeline = PlanningPipeline(config, options['out'], jobs=jobs, trace=options['trace'])
            if stage == 'run':
                pipeline.run()
            elif stage in STAGES:
                pipeline.run_stage(stage)
        except (PlanningError, OSError) as e:
            raise CommandError(str(e), returncode=EXIT_FAILURE) from e

        self.stdout.write(self.style.SUCCESS(
            f'{stage}: wrote {", ".join(pipeline.written)} to {pipeline.out_dir} (seed {config.master_seed})'
        ))
