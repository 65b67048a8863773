from django.urls import path
from . import views

urlpatterns = [
    path('v0/validate/', views.validate, name='validate'),
    path('v0/check-na/', views.check_na, name='check-na'),
    path('v0/price/', views.price, name='price'),
    path('v0/dual-price/', views.dual_price, name='dual-price'),
    path('v0/ftap/', views.ftap, name='ftap'),
]
