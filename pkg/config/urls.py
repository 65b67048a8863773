"""
URL configuration for the riskhedge project.

Every endpoint lives under /api/v0/ in the api app.
"""
from django.urls import path, include

urlpatterns = [
    path('api/', include('api.urls')),
]
