"""
URL mappings for the loss lab app.
"""
from django.urls import path, include

from rest_framework.routers import DefaultRouter

from losslab import views


router = DefaultRouter()
router.register('runs', views.ExperimentRunViewSet)
app_name = 'losslab'

urlpatterns = [
    path('', include(router.urls)),
]
