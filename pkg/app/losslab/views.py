"""
Views for the recorded run APIs.
"""
from drf_spectacular.utils import (
    extend_schema,
    extend_schema_view,
    OpenApiParameter,
    OpenApiTypes,
)
from rest_framework import viewsets

from core.models import ExperimentRun
from losslab import serializers


@extend_schema_view(
    list=extend_schema(
        parameters=[
            OpenApiParameter(
                'loss',
                OpenApiTypes.STR,
                description='Comma separated loss selectors to filter, e.g. amr,softmax',
            ),
            OpenApiParameter(
                'command',
                OpenApiTypes.STR,
                description='Only runs recorded by this command.',
            ),
            OpenApiParameter(
                'seed',
                OpenApiTypes.INT,
                description='Only runs with this seed.',
            ),
        ]
    )
)
class ExperimentRunViewSet(viewsets.ReadOnlyModelViewSet):
    """Browse recorded runs and their per-epoch records."""
    serializer_class = serializers.ExperimentRunDetailSerializer
    queryset = ExperimentRun.objects.all()

    def get_queryset(self):
        """Apply the query-parameter filters."""
        params = self.request.query_params
        queryset = self.queryset
        losses = params.get('loss')
        if losses:
            queryset = queryset.filter(
                loss__in=[loss.strip() for loss in losses.split(',')]
            )
        command = params.get('command')
        if command:
            queryset = queryset.filter(command=command)
        seed = params.get('seed')
        if seed and seed.isdigit():
            queryset = queryset.filter(seed=int(seed))
        if self.action == 'retrieve':
            queryset = queryset.prefetch_related('epochs')

        return queryset.order_by('-id')

    def get_serializer_class(self):
        """Return the serializer class for request."""
        if self.action == 'list':
            return serializers.ExperimentRunSerializer
        return self.serializer_class
