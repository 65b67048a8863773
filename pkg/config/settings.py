"""
Django settings for the riskhedge project.

Numerical settings for the pricing library are read from the environment
(or a local .env file) so the CLI, the HTTP API and the test runner share
one configuration.
"""

import os
from pathlib import Path
from dotenv import load_dotenv

load_dotenv()
# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.getenv('DJANGO_SECRET_KEY', 'your-default-secret-key-for-dev')

# SECURITY WARNING: don't run with debug turned on in production!
DEBUG = os.getenv('DJANGO_DEBUG', 'False') == 'True'

LOG_LEVEL = os.getenv('RISKHEDGE_LOG_LEVEL', 'WARNING')
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {
            'format': '%(asctime)s [%(levelname)s] %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'plain',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': 'INFO',
    },
    'loggers': {
        'django': {
            'handlers': ['console'],
            'level': 'ERROR',
            'propagate': False,
        },
        'core': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
        'data': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
        'api': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
    },
}

ALLOWED_HOSTS = os.getenv('DJANGO_ALLOWED_HOSTS', '').split(',') + [
    'localhost',
    '127.0.0.1',
    'testserver',
    '.onrender.com',
]

CSRF_TRUSTED_ORIGINS = [
    'https://*.onrender.com',
]

# Application definition
INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'django.contrib.auth',
    'rest_framework',
    'corsheaders',
    'api',
]

CORS_ALLOW_CREDENTIALS = False
CORS_ALLOWED_ORIGINS = [
    origin for origin in os.getenv('RISKHEDGE_CORS_ORIGINS', 'http://localhost:3000').split(',') if origin
]
CORS_ALLOW_METHODS = [
    'OPTIONS',
    'POST',
]

MIDDLEWARE = [
    'corsheaders.middleware.CorsMiddleware',
    'django.middleware.security.SecurityMiddleware',
    'django.middleware.common.CommonMiddleware',
    'django.middleware.clickjacking.XFrameOptionsMiddleware',
]

ROOT_URLCONF = 'config.urls'
ASGI_APPLICATION = 'config.asgi.application'

# The pricing service keeps no state between requests.
DATABASES = {}

REST_FRAMEWORK = {
    'DEFAULT_AUTHENTICATION_CLASSES': [],
    'DEFAULT_PERMISSION_CLASSES': ['rest_framework.permissions.AllowAny'],
    'DEFAULT_RENDERER_CLASSES': ['rest_framework.renderers.JSONRenderer'],
    'DEFAULT_PARSER_CLASSES': ['rest_framework.parsers.JSONParser'],
    'UNAUTHENTICATED_USER': None,
}

SECURE_SSL_REDIRECT = os.getenv('DJANGO_SECURE_SSL_REDIRECT', 'False') == 'True'
SECURE_CONTENT_TYPE_NOSNIFF = True

LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# Pricing library
RISKHEDGE_VERSION = '0.4.0'
RISKHEDGE_TOL = float(os.getenv('RISKHEDGE_TOL', '1e-9'))
RISKHEDGE_THREADS = int(os.getenv('RISKHEDGE_THREADS', '1'))
RISKHEDGE_DUAL_SET_CAP = int(os.getenv('RISKHEDGE_DUAL_SET_CAP', '1000000'))
RISKHEDGE_MAX_CHILDREN = int(os.getenv('RISKHEDGE_MAX_CHILDREN', '16'))
RISKHEDGE_LP_MAX_ITER = int(os.getenv('RISKHEDGE_LP_MAX_ITER', '50000'))
RISKHEDGE_SEED = int(os.getenv('RISKHEDGE_SEED', '0'))
