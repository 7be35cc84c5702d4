"""
Development settings for the Scenario Planner
"""
from .base import *

DEBUG = True

# Additional apps for development
INSTALLED_APPS += [
    'django_extensions',
]

# Chatty EA progress while iterating on configs
LOGGING['loggers']['apps.planning']['level'] = env('PLANNING_LOG_LEVEL', default='DEBUG')
