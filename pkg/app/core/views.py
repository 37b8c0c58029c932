"""
Core views for app.
"""
from rest_framework.decorators import api_view
from rest_framework.response import Response

from losslab import FORMAT_VERSION, __version__


@api_view(['GET'])
def health_check(request):
    """Returns successful response with the code and report versions."""
    return Response({
        'healthy': True,
        'version': __version__,
        'format_version': FORMAT_VERSION,
    })
