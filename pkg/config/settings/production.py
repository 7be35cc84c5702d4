"""
Production settings for the Scenario Planner (batch workers and scheduled runs)
"""
from .base import *

DEBUG = False

# Sentry error tracking
import sentry_sdk
from sentry_sdk.integrations.django import DjangoIntegration
from sentry_sdk.integrations.celery import CeleryIntegration

sentry_sdk.init(
    dsn=env('SENTRY_DSN', default=''),
    integrations=[
        DjangoIntegration(),
        CeleryIntegration(),
    ],
    traces_sample_rate=0.1,
    send_default_pii=False,
    environment=env('ENVIRONMENT', default='production'),
)

# Logging (production)
LOGGING['handlers']['file']['filename'] = env('LOG_FILE', default='/var/log/planning/planning.log')
LOGGING['handlers']['error_file'] = {
    'level': 'ERROR',
    'class': 'logging.FileHandler',
    'filename': env('ERROR_LOG_FILE', default='/var/log/planning/planning_errors.log'),
    'formatter': 'verbose',
}
LOGGING['loggers']['apps.planning']['handlers'].append('error_file')

PLANNING['JOBS'] = env.int('PLAN_JOBS', default=os.cpu_count() or 1)
