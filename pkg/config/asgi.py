"""
ASGI config for the riskhedge project.

It exposes the ASGI callable as a module-level variable named ``application``;
gunicorn serves it through uvicorn workers.
"""

import os
from django.core.asgi import get_asgi_application

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'config.settings')

application = get_asgi_application()
